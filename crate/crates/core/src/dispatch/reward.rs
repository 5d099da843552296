//! Per-vehicle dispatch reward.

use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights<R> {
    pub served: R,
    pub dispatch_time: R,
    pub extra_delay: R,
    pub profit: R,
    pub activation: R,
}

impl<R: Real> Default for RewardWeights<R> {
    fn default() -> Self {
        Self {
            served: R::of(10.0),
            dispatch_time: R::of(1.0),
            extra_delay: R::of(5.0),
            profit: R::of(12.0),
            activation: R::of(8.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardBreakdown<R> {
    /// Customers served.
    pub served: R,
    /// Minutes spent driving to dispatch targets or detouring to pickups.
    pub dispatch_minutes: R,
    /// Extra minutes riders spend because of pooling.
    pub extra_delay_minutes: R,
    /// Fares earned minus fuel spent.
    pub profit: R,
    /// 1 when the vehicle went from empty to carrying riders.
    pub activation: R,
}

impl<R: Real> RewardBreakdown<R> {
    pub fn add(&mut self, other: &Self) {
        self.served += other.served;
        self.dispatch_minutes += other.dispatch_minutes;
        self.extra_delay_minutes += other.extra_delay_minutes;
        self.profit += other.profit;
        self.activation += other.activation;
    }
}

/// Rewards service and profit, penalizes time and newly activated vehicles.
pub fn compute_reward<R: Real>(b: &RewardBreakdown<R>, w: &RewardWeights<R>) -> R {
    w.served * b.served - w.dispatch_time * b.dispatch_minutes - w.extra_delay * b.extra_delay_minutes
        + w.profit * b.profit
        - w.activation * b.activation.max(R::zero())
}
