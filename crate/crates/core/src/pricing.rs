//! Trip pricing: the initial fare, the driver's counter-price based on the
//! destination's hotspot rank, and the customer's accept/reject rule.

use crate::demand::{Preferences, RequestId};
use crate::error::{domain, Result};
use crate::geo::ZoneId;
use crate::num::Real;
use crate::routing::{Route, StopKind};

/// Money per liter of fuel used when nothing else is configured.
pub const DEFAULT_GAS_PRICE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleTypeProfile<R> {
    /// Luxury rank, 1 = most basic.
    pub rank: u32,
    pub capacity: u32,
    /// Km per liter.
    pub mileage: R,
    /// Money per km.
    pub per_km: R,
    /// Rebate per minute the customer waits.
    pub per_wait_minute: R,
    /// Minimum fare per trip.
    pub base_fare: R,
}

impl<R: Real> VehicleTypeProfile<R> {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.mileage, self.per_km, self.per_wait_minute, self.base_fare];
        if self.rank == 0 || self.capacity == 0 || positive.iter().any(|v| !(*v > R::zero()) || !v.is_finite()) {
            return Err(domain(format!("vehicle type fields must all be > 0: {self:?}")));
        }
        Ok(())
    }

    /// Four types from basic to luxury.
    pub fn default_table() -> Vec<Self> {
        let rows = [
            (1, 4, 14.0, 1.0, 0.3, 3.0),
            (2, 4, 12.0, 1.3, 0.4, 4.0),
            (3, 6, 10.0, 1.7, 0.5, 5.0),
            (4, 6, 8.0, 2.2, 0.6, 7.0),
        ];
        rows.iter()
            .map(|&(rank, capacity, mileage, per_km, per_wait, base)| Self {
                rank,
                capacity,
                mileage: R::of(mileage),
                per_km: R::of(per_km),
                per_wait_minute: R::of(per_wait),
                base_fare: R::of(base),
            })
            .collect()
    }

    /// Fuel money spent covering `km`.
    pub fn fuel_cost(&self, km: R, gas_price: R) -> R {
        km / self.mileage * gas_price
    }
}

/// `|load at drop-off - load at pickup|` for `request` in `route`, at least 1.
pub fn sharing_count<R: Real>(route: &Route<R>, request: RequestId) -> Result<u32> {
    let o = route.position(request, StopKind::Pickup);
    let d = route.position(request, StopKind::Dropoff);
    match (o, d) {
        (Some(o), Some(d)) => Ok(route.loads()[d].abs_diff(route.loads()[o]).max(1)),
        _ => Err(domain(format!("{request} has no pickup and drop-off in the route"))),
    }
}

/// `B + w1 c/V + (c/V)(P_gas/M_V) - w3 T`, never below `B`.
pub fn initial_price<R: Real>(
    profile: &VehicleTypeProfile<R>,
    route_cost_km: R,
    sharing: u32,
    wait_minutes: R,
    gas_price: R,
) -> Result<R> {
    if sharing == 0 {
        return Err(domain("sharing count must be >= 1"));
    }
    let per_rider = route_cost_km / R::of_count(sharing as usize);
    let raw = profile.base_fare + profile.per_km * per_rider + per_rider * (gas_price / profile.mileage)
        - profile.per_wait_minute * wait_minutes;
    Ok(raw.max(profile.base_fare))
}

/// Zones ranked by expected discounted reward, best first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HotspotList {
    order: Vec<ZoneId>,
    /// `rank[z]` is 1 for the best zone.
    rank: Vec<u32>,
    top: usize,
}

impl HotspotList {
    pub fn len(&self) -> usize {
        self.top
    }

    pub fn is_empty(&self) -> bool {
        self.top == 0
    }

    /// The hotspot zones, best first.
    pub fn zones(&self) -> &[ZoneId] {
        &self.order[..self.top]
    }

    pub fn contains(&self, zone: ZoneId) -> bool {
        self.rank[zone] as usize <= self.top
    }

    pub fn rank(&self, zone: ZoneId) -> u32 {
        self.rank[zone]
    }

    /// Every zone equally ranked by id, top `fraction` listed.
    pub fn uniform(zones: usize, fraction: f64) -> Result<Self> {
        build_hotspots(&vec![0.0; zones], fraction)
    }
}

/// Ranks zones by value, descending, ties by zone id. The list holds the
/// top `ceil(fraction * M)` zones.
pub fn build_hotspots<R: Real>(values: &[R], fraction: f64) -> Result<HotspotList> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(domain(format!("hotspot fraction must be in (0, 1], got {fraction}")));
    }
    if let Some((z, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(domain(format!("zone {z} has non-finite value {v}")));
    }
    let mut order: Vec<ZoneId> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite").then(a.cmp(&b)));
    let mut rank = vec![0u32; values.len()];
    for (i, &z) in order.iter().enumerate() {
        rank[z] = i as u32 + 1;
    }
    // The epsilon keeps products such as 0.1 * 30 from rounding up a zone.
    let top = ((fraction * values.len() as f64 - 1e-9).ceil().max(1.0) as usize).min(values.len());
    Ok(HotspotList { order, rank, top })
}

/// Driver's price: unchanged for hotspot destinations, otherwise
/// `P + P (alpha / 2) B` with `alpha` the destination's rank.
pub fn propose_price<R: Real>(initial: R, destination: ZoneId, hotspots: &HotspotList, base_fare: R) -> R {
    if hotspots.contains(destination) {
        initial
    } else {
        surcharge(initial, hotspots.rank(destination), base_fare)
    }
}

pub fn surcharge<R: Real>(initial: R, rank: u32, base_fare: R) -> R {
    initial + initial * (R::of(rank as f64) / R::of(2.0)) * base_fare
}

/// `w4 / occupancy + w5 / max(T, 1) + w6 * type rank`.
pub fn customer_utility<R: Real>(occupancy: u32, wait_minutes: R, type_rank: u32, prefs: &Preferences<R>) -> R {
    let occupancy = R::of(occupancy.max(1) as f64);
    let wait = wait_minutes.max(R::one());
    prefs.pooling_weight / occupancy + prefs.delay_weight / wait + prefs.vehicle_type_weight * R::of(type_rank as f64)
}

/// Accepts iff `utility > price - compromise`.
pub fn customer_decide<R: Real>(utility: R, price: R, compromise: R) -> bool {
    utility > price - compromise
}

/// One priced offer to a customer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quote<R> {
    pub request: RequestId,
    pub initial_price: R,
    pub price: R,
    /// Km the request adds to the vehicle's route.
    pub marginal_km: R,
    pub sharing: u32,
    pub wait_minutes: R,
    pub utility: R,
    pub accepted: bool,
}
