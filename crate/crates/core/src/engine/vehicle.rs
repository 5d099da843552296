use std::collections::BTreeMap;

use crate::demand::RequestId;
use crate::dispatch::RewardBreakdown;
use crate::geo::{Grid, ZoneId};
use crate::matching::VehicleId;
use crate::pricing::VehicleTypeProfile;
use crate::routing::{Route, Stop};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VehicleStatus {
    Idle,
    Dispatching,
    Serving,
}

/// A committed rider, from acceptance to drop-off.
#[derive(Clone, Debug, PartialEq)]
pub struct RiderInfo {
    pub request_time: f64,
    pub passengers: u32,
    pub price: f64,
    pub committed_at: f64,
    pub boarded_at: Option<f64>,
    /// Drop-off minute had the vehicle served only this rider.
    pub solo_drop: f64,
    pub estimated_drop: f64,
    /// Minutes of delay versus the solo trip, `estimated_drop - solo_drop`.
    pub xi: f64,
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub id: VehicleId,
    pub profile: VehicleTypeProfile<f64>,
    pub zone: ZoneId,
    /// Km already covered toward `heading`.
    pub progress_km: f64,
    pub heading: Option<ZoneId>,
    pub route: Route<f64>,
    pub dispatch_target: Option<ZoneId>,
    pub idle_minutes: f64,
    pub entered_at: f64,
    pub exits_at: f64,
    pub left_at: Option<f64>,
    pub newly_entered: bool,
    pub riders: BTreeMap<RequestId, RiderInfo>,
    pub earnings: f64,
    pub distance_km: f64,
    pub occupied_minutes: f64,
    pub idle_total_minutes: f64,
    pub riders_served: u64,
    /// Reward terms collected since the last dispatch decision.
    pub reward: RewardBreakdown<f64>,
    /// State and action of the last dispatch decision.
    pub pending: Option<(Vec<f64>, usize)>,
}

impl Vehicle {
    pub fn new(id: VehicleId, profile: VehicleTypeProfile<f64>, zone: ZoneId, entered_at: f64, exits_at: f64) -> Self {
        Self {
            id,
            profile,
            zone,
            progress_km: 0.0,
            heading: None,
            route: Route::new(zone),
            dispatch_target: None,
            idle_minutes: 0.0,
            entered_at,
            exits_at,
            left_at: None,
            newly_entered: true,
            riders: BTreeMap::new(),
            earnings: 0.0,
            distance_km: 0.0,
            occupied_minutes: 0.0,
            idle_total_minutes: 0.0,
            riders_served: 0,
            reward: RewardBreakdown::default(),
            pending: None,
        }
    }

    pub fn status(&self) -> VehicleStatus {
        if !self.route.is_empty() {
            VehicleStatus::Serving
        } else if self.dispatch_target.is_some() {
            VehicleStatus::Dispatching
        } else {
            VehicleStatus::Idle
        }
    }

    /// Seats taken by riders on board or committed.
    pub fn load(&self) -> u32 {
        self.riders.values().map(|r| r.passengers).sum()
    }

    pub fn onboard(&self) -> u32 {
        self.route.onboard()
    }

    pub fn present(&self) -> bool {
        self.left_at.is_none()
    }

    /// Can take new requests at `minute`.
    pub fn on_duty(&self, minute: f64) -> bool {
        self.present() && minute < self.exits_at
    }

    pub fn fuel_cost(&self, gas_price: f64) -> f64 {
        self.profile.fuel_cost(self.distance_km, gas_price)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopEvent {
    pub stop: Stop,
    pub minute: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Movement {
    pub km: f64,
    pub events: Vec<StopEvent>,
}

/// Moves the vehicle cell by cell along its route, or toward its dispatch
/// target when the route is empty, for `dt` minutes. Stops in the current
/// zone are completed as they are reached; each event carries the minute
/// it happened. The route's loads follow the completed stops.
pub fn advance_vehicle(v: &mut Vehicle, now: f64, dt: f64, grid: &Grid<f64>, speed_kmh: f64) -> Movement {
    let mut budget = speed_kmh * dt / 60.0;
    let mut used = 0.0;
    let mut events = Vec::new();
    let at = |km: f64| now + km / speed_kmh * 60.0;
    loop {
        while v.route.stops().first().is_some_and(|s| s.zone == v.zone) {
            let stop = v.route.complete_front(grid).expect("route has a front stop");
            events.push(StopEvent { stop, minute: at(used) });
        }
        let target = match v.route.stops().first() {
            Some(s) => s.zone,
            None => match v.dispatch_target {
                Some(t) if t != v.zone => t,
                _ => break,
            },
        };
        let next = grid.step_toward(v.zone, target);
        if v.heading != Some(next) {
            v.heading = Some(next);
            v.progress_km = 0.0;
        }
        let need = grid.cell_size() - v.progress_km;
        if budget + 1e-9 >= need {
            budget = (budget - need).max(0.0);
            used += need;
            v.zone = next;
            v.progress_km = 0.0;
            v.heading = None;
            v.route.set_start(next, grid);
        } else {
            v.progress_km += budget;
            used += budget;
            break;
        }
    }
    v.distance_km += used;
    Movement { km: used, events }
}
