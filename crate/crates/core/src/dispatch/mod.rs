//! Idle-vehicle dispatch with a learned action-value function.
//!
//! A vehicle sees four planes centred on its zone: requests expected over
//! the next 30 minutes and vehicles expected to be available now, in 15 and
//! in 30 minutes. It picks one of 15x15 moves of up to seven cells per axis.

pub mod checkpoint;
pub mod network;
pub mod qfunction;
pub mod replay;
pub mod reward;
pub mod schedule;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::demand::{DemandForecast, SupplyForecast};
use crate::error::{domain, Result};
use crate::geo::{Grid, ZoneId};
use crate::matching::VehicleId;
use crate::num::Real;
use qfunction::{QFunction, PLANES};

pub use qfunction::{Profile, QConfig};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{compute_reward, RewardBreakdown, RewardWeights};
pub use schedule::{schedule, Linear};

pub const MAX_MOVE: i64 = 7;
pub const ACTION_SIDE: usize = 15;
pub const ACTIONS: usize = ACTION_SIDE * ACTION_SIDE;
/// Demand plane covers this many upcoming steps.
pub const DEMAND_WINDOW: usize = 30;
/// Supply planes are taken at these step offsets.
pub const SUPPLY_OFFSETS: [usize; 3] = [0, 15, 30];

/// Move of `dy` rows and `dx` columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub dy: i64,
    pub dx: i64,
}

impl Action {
    pub const STAY: Action = Action { dy: 0, dx: 0 };

    pub fn new(dy: i64, dx: i64) -> Result<Self> {
        if dy.abs() > MAX_MOVE || dx.abs() > MAX_MOVE {
            return Err(domain(format!("move ({dy}, {dx}) exceeds {MAX_MOVE} cells")));
        }
        Ok(Self { dy, dx })
    }

    pub fn index(self) -> usize {
        ((self.dy + MAX_MOVE) as usize) * ACTION_SIDE + (self.dx + MAX_MOVE) as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        if i >= ACTIONS {
            return Err(domain(format!("action index {i} out of range")));
        }
        Ok(Self { dy: (i / ACTION_SIDE) as i64 - MAX_MOVE, dx: (i % ACTION_SIDE) as i64 - MAX_MOVE })
    }
}

pub fn action_to_zone<R: Real>(grid: &Grid<R>, zone: ZoneId, action: Action) -> ZoneId {
    grid.offset(zone, action.dy, action.dx)
}

/// Full-grid feature planes for one tick, cropped per vehicle on demand.
/// Entries are `ln(1 + x)` of the expected request count over the next
/// window and of the projected idle supply.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePlanes<R> {
    rows: usize,
    cols: usize,
    /// `PLANES x rows x cols`.
    data: Vec<R>,
}

impl<R: Real> StatePlanes<R> {
    pub fn build(grid: &Grid<R>, demand: &DemandForecast<R>, supply: &SupplyForecast<R>) -> Result<Self> {
        let need = DEMAND_WINDOW.max(SUPPLY_OFFSETS[2]) + 1;
        for (name, steps) in [("demand", demand.series.steps()), ("supply", supply.series.steps())] {
            if steps < need {
                return Err(domain(format!("{name} forecast covers {steps} steps, dispatch needs {need}")));
            }
        }
        let n = grid.zone_count();
        if demand.series.zones() != n || supply.series.zones() != n {
            return Err(domain("forecast zone count differs from the grid"));
        }
        let mut data = vec![R::zero(); PLANES * n];
        for step in 0..DEMAND_WINDOW {
            for (z, v) in demand.series.step(step).iter().enumerate() {
                data[z] += *v;
            }
        }
        for (p, &off) in SUPPLY_OFFSETS.iter().enumerate() {
            data[(p + 1) * n..(p + 2) * n].copy_from_slice(supply.series.step(off));
        }
        // Counts are compressed so a crowded zone does not swamp the input.
        for v in &mut data {
            *v = v.max(R::zero()).ln_1p();
        }
        Ok(Self { rows: grid.rows(), cols: grid.cols(), data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![R::zero(); PLANES * rows * cols] }
    }

    pub fn plane(&self, p: usize) -> &[R] {
        let n = self.rows * self.cols;
        &self.data[p * n..(p + 1) * n]
    }

    /// `PLANES x window x window` values centred on `zone`, zero outside the grid.
    pub fn encode(&self, zone: ZoneId, window: usize) -> Vec<R> {
        let n = self.rows * self.cols;
        let (row, col) = ((zone / self.cols) as i64, (zone % self.cols) as i64);
        let half = (window / 2) as i64;
        let mut out = vec![R::zero(); PLANES * window * window];
        for p in 0..PLANES {
            for i in 0..window {
                let r = row - half + i as i64;
                if r < 0 || r >= self.rows as i64 {
                    continue;
                }
                for j in 0..window {
                    let c = col - half + j as i64;
                    if c < 0 || c >= self.cols as i64 {
                        continue;
                    }
                    out[(p * window + i) * window + j] = self.data[p * n + r as usize * self.cols + c as usize];
                }
            }
        }
        out
    }
}

/// Encodes the state seen by a vehicle in `zone`.
pub fn encode_state<R: Real>(
    grid: &Grid<R>,
    demand: &DemandForecast<R>,
    supply: &SupplyForecast<R>,
    zone: ZoneId,
    window: usize,
) -> Result<Vec<R>> {
    Ok(StatePlanes::build(grid, demand, supply)?.encode(zone, window))
}

/// Greedy with probability `1 - epsilon` (ties to the lowest index), uniform
/// otherwise.
pub fn select_action<R: Real, G: Rng + ?Sized>(q: &[R], epsilon: f64, rng: &mut G) -> usize {
    if rng.random::<f64>() < epsilon {
        return rng.random_range(0..q.len());
    }
    argmax(q)
}

pub fn argmax<R: Real>(q: &[R]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Epsilon-greedy with the function's current epsilon.
    Explore,
    Greedy,
    /// Uniform over all moves.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdleVehicle {
    pub id: VehicleId,
    pub zone: ZoneId,
    pub idle_minutes: f64,
    pub newly_entered: bool,
}

impl IdleVehicle {
    pub fn due(&self, threshold_minutes: f64) -> bool {
        self.newly_entered || self.idle_minutes > threshold_minutes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispatchDecision<R> {
    pub vehicle: VehicleId,
    pub from: ZoneId,
    pub target: ZoneId,
    pub action: usize,
    /// Encoded state, kept for learning.
    pub state: Vec<R>,
}

/// Stream of a vehicle's random draws, independent of scheduling.
pub fn vehicle_rng(seed: u64, tick: u64, vehicle: VehicleId) -> ChaCha8Rng {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [tick, vehicle.0 as u64] {
        h = (h ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Picks a destination for every vehicle that is new or idle longer than
/// `threshold_minutes`. Decisions come back in input order.
pub fn dispatch_idle<R: Real>(
    vehicles: &[IdleVehicle],
    threshold_minutes: f64,
    grid: &Grid<R>,
    planes: &StatePlanes<R>,
    policy: &QFunction<R>,
    mode: Mode,
    seed: u64,
    tick: u64,
) -> Result<Vec<DispatchDecision<R>>> {
    let window = policy.config.profile.window();
    let epsilon = policy.epsilon().as_f64();
    vehicles
        .par_iter()
        .filter(|v| v.due(threshold_minutes))
        .map(|v| {
            let state = planes.encode(v.zone, window);
            let mut rng = vehicle_rng(seed, tick, v.id);
            let action = match mode {
                Mode::Uniform => rng.random_range(0..ACTIONS),
                Mode::Greedy => argmax(&policy.q_values(&state)?),
                Mode::Explore => {
                    if rng.random::<f64>() < epsilon {
                        rng.random_range(0..ACTIONS)
                    } else {
                        argmax(&policy.q_values(&state)?)
                    }
                }
            };
            let target = action_to_zone(grid, v.zone, Action::from_index(action)?);
            Ok(DispatchDecision { vehicle: v.id, from: v.zone, target, action, state })
        })
        .collect()
}

/// `max_a Q(s_z, a)` for every zone `z`, with the state centred on `z`.
pub fn zone_values<R: Real>(planes: &StatePlanes<R>, policy: &QFunction<R>, zones: usize) -> Result<Vec<R>> {
    let window = policy.config.profile.window();
    (0..zones).into_par_iter().map(|z| policy.max_q(&planes.encode(z, window))).collect()
}
