//! The tick loop. Each tick fetches new and carried-over requests, admits
//! and dispatches entering vehicles, assigns requests greedily, lets every
//! vehicle price and insert its list in proximity order, moves the fleet,
//! dispatches long-idle vehicles, retires vehicles at the end of their
//! shift and appends one metrics row.

pub mod config;
pub mod metrics;
pub mod vehicle;

use std::collections::{BTreeMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{DemandSource, PolicyMode, SimConfig, Toggles};
pub use metrics::{summarize, DecisionRow, Histogram, MetricsLog, QuoteRow, Report, RiderRow, TickRow, VehicleRow};
pub use vehicle::{advance_vehicle, Movement, RiderInfo, StopEvent, Vehicle, VehicleStatus};

use crate::demand::{
    generate_synthetic, ingest_trips, project_supply, DemandHistory, RateProfile, RejectReason, Request, RequestId,
    RequestStatus, SupplyEntry, SyntheticSpec,
};
use crate::dispatch::qfunction::QFunction;
use crate::dispatch::{
    compute_reward, dispatch_idle, zone_values, IdleVehicle, Mode, StatePlanes, Transition, DEMAND_WINDOW,
    SUPPLY_OFFSETS,
};
use crate::error::{Error, Result};
use crate::geo::{Grid, Metric, ZoneId};
use crate::matching::{greedy_assign, AssignParams, Candidate, VehicleId};
use crate::pricing::{
    build_hotspots, customer_decide, customer_utility, initial_price, propose_price, sharing_count, HotspotList, Quote,
};
use crate::routing::{insert_request, insert_unoptimized, Insertion, Route, StopKind, Trip};

const FLEET_SALT: u64 = 0x5eed_f1ee;
const DEMAND_SALT: u64 = 0xd3ad_0001;
const LEARN_SALT: u64 = 0x1ea2_0002;

/// Seed of the synthetic demand stream for a run seed.
pub fn demand_seed(seed: u64) -> u64 {
    seed ^ DEMAND_SALT
}

/// Builds the request stream described by the config.
pub fn load_requests(cfg: &SimConfig, grid: &Grid<f64>) -> Result<Vec<Request<f64>>> {
    let defaults = cfg.trip_defaults();
    if cfg.demand == DemandSource::Trips {
        let path = cfg.trips_path.as_ref().ok_or_else(|| Error::Config("trips_path is not set".into()))?;
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open trips file {}: {e}", path.display())))?;
        let report = ingest_trips(std::io::BufReader::new(file), grid, &defaults)?;
        for r in &report.rejects {
            log::warn!("trips line {}: {}", r.line, r.message);
        }
        if !report.snapped.is_empty() {
            log::info!("{} trips snapped onto the grid", report.snapped.len());
        }
        return Ok(report.requests);
    }
    let hotspots: Vec<ZoneId> = cfg.demand_hotspots.iter().map(|h| grid.zone_at(h[0], h[1])).collect::<Result<_>>()?;
    let (profile, destinations) = match cfg.demand {
        DemandSource::City => {
            let p = RateProfile::city(grid, &hotspots, cfg.demand_per_minute)?;
            let w = p.zone_weights();
            (p, w)
        }
        _ => {
            let n = grid.zone_count();
            let targets: Vec<ZoneId> = if hotspots.is_empty() { (0..n).collect() } else { hotspots };
            let mut rates = vec![0.0; n];
            for &z in &targets {
                rates[z] += cfg.demand_per_minute / targets.len() as f64;
            }
            (RateProfile::stationary(rates)?, Vec::new())
        }
    };
    let spec = SyntheticSpec {
        destination_weights: destinations,
        passenger_weights: cfg.passenger_weights.clone(),
        max_trip_cells: cfg.max_trip_cells,
    };
    let minutes = (cfg.steps as f64 * cfg.delta_t).ceil() as usize;
    generate_synthetic(demand_seed(cfg.seed), &profile, minutes, grid, &spec, &defaults)
}

/// FNV-1a over the request stream; equal fingerprints mean equal demand.
pub fn fingerprint(requests: &[Request<f64>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for r in requests {
        eat(r.id.0);
        eat(r.request_time.to_bits());
        eat(r.origin as u64);
        eat(r.destination as u64);
        eat(r.passengers as u64);
    }
    h
}

/// Vehicles with entry times uniform over the entry window, types drawn by
/// weight and uniform entry zones. Ids follow entry order.
pub fn generate_fleet(cfg: &SimConfig) -> Result<Vec<Vehicle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ FLEET_SALT);
    let types = cfg.vehicle_types();
    let kinds = WeightedIndex::new(&cfg.type_weights).map_err(|e| Error::Config(format!("type_weights: {e}")))?;
    let zones = cfg.rows * cfg.cols;
    let mut entries: Vec<(f64, usize, ZoneId)> = (0..cfg.vehicles)
        .map(|_| {
            let t = rng.random::<f64>() * cfg.entry_window_minutes;
            (t, kinds.sample(&mut rng), rng.random_range(0..zones))
        })
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(entries
        .into_iter()
        .enumerate()
        .map(|(i, (t, k, z))| Vehicle::new(VehicleId(i as u32), types[k], z, t, t + cfg.duty_hours * 60.0))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OfferOutcome {
    Accepted,
    Declined,
    /// No capacity-feasible insertion.
    Infeasible,
    /// The pickup, or a pickup already promised, would come too late.
    TooLate,
}

#[derive(Clone, Debug)]
struct Offer {
    request: usize,
    outcome: OfferOutcome,
    quote: Option<Quote<f64>>,
}

#[derive(Clone, Debug)]
struct Plan {
    vehicle: VehicleId,
    route: Route<f64>,
    offers: Vec<Offer>,
}

struct PlanCtx<'a> {
    cfg: &'a SimConfig,
    grid: &'a Grid<f64>,
    requests: &'a [Request<f64>],
    index: &'a BTreeMap<RequestId, usize>,
    hotspots: &'a HotspotList,
    now: f64,
}

impl PlanCtx<'_> {
    fn minutes(&self, km: f64) -> f64 {
        km / self.cfg.speed_kmh * 60.0
    }

    fn request(&self, id: RequestId) -> &Request<f64> {
        &self.requests[self.index[&id]]
    }

    fn wait_at(&self, route: &Route<f64>, pos: usize, request_time: f64) -> f64 {
        self.now - request_time + self.minutes(route.distance_to(pos, self.grid))
    }

    /// The new rider is picked up within tolerance and no rider already
    /// waiting is pushed past both their tolerance and their current estimate.
    fn waits_ok(&self, old: &Route<f64>, ins: &Insertion<f64>, r: &Request<f64>, wait: f64) -> bool {
        if wait > r.delay_tolerance + 1e-9 {
            return false;
        }
        for (pos, s) in ins.route.stops().iter().enumerate() {
            if s.kind != StopKind::Pickup || s.request == r.id {
                continue;
            }
            let other = self.request(s.request);
            let before = old.position(s.request, StopKind::Pickup).map(|p| self.wait_at(old, p, other.request_time));
            let after = self.wait_at(&ins.route, pos, other.request_time);
            if after > other.delay_tolerance.max(before.unwrap_or(0.0)) + 1e-9 {
                return false;
            }
        }
        true
    }
}

fn quote_offer(
    v: &Vehicle,
    r: &Request<f64>,
    old: &Route<f64>,
    ins: &Insertion<f64>,
    wait: f64,
    ctx: &PlanCtx,
) -> Result<Quote<f64>> {
    let marginal = (ins.route.cost() - old.cost()).max(0.0);
    let sharing = sharing_count(&ins.route, r.id)?;
    let initial = initial_price(&v.profile, marginal, sharing, wait, ctx.cfg.gas_price)?;
    let occupancy = ins.route.loads()[ins.origin_pos];
    let utility = customer_utility(occupancy, wait, v.profile.rank, &r.prefs);
    let (price, accepted) = if ctx.cfg.pricing {
        let p = propose_price(initial, r.destination, ctx.hotspots, v.profile.base_fare);
        (p, customer_decide(utility, p, r.prefs.compromise))
    } else {
        (initial, true)
    };
    Ok(Quote {
        request: r.id,
        initial_price: initial,
        price,
        marginal_km: marginal,
        sharing,
        wait_minutes: wait,
        utility,
        accepted,
    })
}

/// Prices and inserts a vehicle's list in order against a snapshot of the
/// vehicle. Accepted requests stay in the working route for later ones.
fn plan_vehicle(v: &Vehicle, list: &[RequestId], ctx: &PlanCtx) -> Result<Plan> {
    let mut route = v.route.clone();
    let mut offers = Vec::with_capacity(list.len());
    for id in list {
        let idx = ctx.index[id];
        let r = &ctx.requests[idx];
        let trip = Trip::from(r);
        let cap = v.profile.capacity;
        let ins = if ctx.cfg.darm {
            insert_request(&route, &trip, cap, ctx.grid)
        } else {
            insert_unoptimized(&route, &trip, cap, ctx.grid)
        };
        let ins = match ins {
            Ok(i) => i,
            Err(Error::InfeasibleRoute(_)) => {
                offers.push(Offer { request: idx, outcome: OfferOutcome::Infeasible, quote: None });
                continue;
            }
            Err(e) => return Err(e),
        };
        let wait = ctx.wait_at(&ins.route, ins.origin_pos, r.request_time);
        if !ctx.waits_ok(&route, &ins, r, wait) {
            offers.push(Offer { request: idx, outcome: OfferOutcome::TooLate, quote: None });
            continue;
        }
        let quote = quote_offer(v, r, &route, &ins, wait, ctx)?;
        let outcome = if quote.accepted {
            route = ins.route;
            OfferOutcome::Accepted
        } else {
            OfferOutcome::Declined
        };
        offers.push(Offer { request: idx, outcome, quote: Some(quote) });
    }
    Ok(Plan { vehicle: v.id, route, offers })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    total: u64,
    served: u64,
    radius: u64,
    customer: u64,
    expired: u64,
    degenerate: u64,
    boarded: u64,
    alighted: u64,
}

pub struct RunOutput {
    pub log: MetricsLog,
    pub policy: QFunction<f64>,
    pub fingerprint: u64,
}

pub struct Simulation {
    cfg: SimConfig,
    grid: Grid<f64>,
    tick: u64,
    requests: Vec<Request<f64>>,
    index: BTreeMap<RequestId, usize>,
    vehicle_of: Vec<Option<VehicleId>>,
    price_of: Vec<Option<f64>>,
    wait_of: Vec<Option<f64>>,
    next_arrival: usize,
    queue: Vec<usize>,
    vehicles: Vec<Vehicle>,
    arrivals: VecDeque<Vehicle>,
    history: DemandHistory,
    policy: QFunction<f64>,
    hotspots: HotspotList,
    planes: Option<StatePlanes<f64>>,
    rng: ChaCha8Rng,
    counts: Counts,
    log: MetricsLog,
    trace: bool,
    fingerprint: u64,
}

impl Simulation {
    /// Validates the config, builds demand and fleet, and starts at tick 0.
    /// Without a policy a fresh one is initialised from the config.
    pub fn new(cfg: SimConfig, policy: Option<QFunction<f64>>) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(cfg.rows, cfg.cols, cfg.cell_km)?;
        let requests = load_requests(&cfg, &grid)?;
        let fleet = generate_fleet(&cfg)?;
        Self::with_parts(cfg, requests, fleet, policy)
    }

    /// Starts from an explicit request stream and fleet.
    pub fn with_parts(
        cfg: SimConfig,
        mut requests: Vec<Request<f64>>,
        mut fleet: Vec<Vehicle>,
        policy: Option<QFunction<f64>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(cfg.rows, cfg.cols, cfg.cell_km)?;
        let zones = grid.zone_count();
        requests.sort_by(|a, b| a.request_time.total_cmp(&b.request_time).then(a.id.cmp(&b.id)));
        let mut index = BTreeMap::new();
        for (i, r) in requests.iter().enumerate() {
            if r.origin >= zones || r.destination >= zones {
                return Err(Error::Config(format!("request {} lies outside the {}x{} grid", r.id, cfg.rows, cfg.cols)));
            }
            if !r.request_time.is_finite() || r.passengers == 0 {
                return Err(Error::Config(format!("request {} has a bad time or party size", r.id)));
            }
            if index.insert(r.id, i).is_some() {
                return Err(Error::Config(format!("request id {} appears twice", r.id)));
            }
        }
        fleet.sort_by(|a, b| a.entered_at.total_cmp(&b.entered_at).then(a.id.cmp(&b.id)));
        for (i, v) in fleet.iter().enumerate() {
            if v.id.0 as usize != i || v.zone >= zones {
                return Err(Error::Config(format!(
                    "fleet ids must be 0..n in entry order and zones inside the grid; vehicle {} breaks this",
                    v.id
                )));
            }
        }
        let policy = match policy {
            Some(p) => {
                let want = cfg.q_profile()?;
                if p.config.profile != want {
                    return Err(Error::Config(format!(
                        "policy profile {:?} differs from the configured {:?}",
                        p.config.profile, want
                    )));
                }
                if p.config.grid != (cfg.rows, cfg.cols) {
                    log::warn!(
                        "policy was trained on a {:?} grid, running on {}x{}",
                        p.config.grid,
                        cfg.rows,
                        cfg.cols
                    );
                }
                p
            }
            None => QFunction::new(cfg.q_config()?)?,
        };
        let n = requests.len();
        Ok(Self {
            hotspots: HotspotList::uniform(zones, cfg.lambda)?,
            history: DemandHistory::new(zones, cfg.forecast_bin_minutes)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ LEARN_SALT),
            fingerprint: fingerprint(&requests),
            grid,
            tick: 0,
            index,
            vehicle_of: vec![None; n],
            price_of: vec![None; n],
            wait_of: vec![None; n],
            requests,
            next_arrival: 0,
            queue: Vec::new(),
            vehicles: Vec::new(),
            arrivals: fleet.into(),
            policy,
            planes: None,
            counts: Counts::default(),
            log: MetricsLog::default(),
            trace: false,
            cfg,
        })
    }

    /// Records every priced offer and dispatch decision in the log when on.
    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn minute(&self) -> f64 {
        self.tick as f64 * self.cfg.delta_t
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn requests(&self) -> &[Request<f64>] {
        &self.requests
    }

    pub fn request(&self, id: RequestId) -> Option<&Request<f64>> {
        self.index.get(&id).map(|&i| &self.requests[i])
    }

    pub fn policy(&self) -> &QFunction<f64> {
        &self.policy
    }

    pub fn hotspots(&self) -> &HotspotList {
        &self.hotspots
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn speed(&self) -> f64 {
        self.cfg.speed_kmh
    }

    /// Feature planes for the current fleet and demand history.
    pub fn state_planes(&mut self) -> Result<&StatePlanes<f64>> {
        if self.planes.is_none() {
            let now = self.minute();
            let dt = self.cfg.delta_t;
            let horizon = DEMAND_WINDOW.max(SUPPLY_OFFSETS[2]);
            let demand = self.history.predict::<f64>(now, horizon, dt);
            let speed = self.speed();
            let fleet: Vec<SupplyEntry<f64>> = self
                .vehicles
                .iter()
                .filter(|v| v.on_duty(now))
                .map(|v| SupplyEntry {
                    zone: v.zone,
                    busy_until: (!v.route.is_empty()).then(|| (v.route.last_zone(), v.route.cost() / speed * 60.0)),
                    exits_in: Some(v.exits_at - now),
                })
                .collect();
            let supply = project_supply(&fleet, self.grid.zone_count(), horizon, dt);
            self.planes = Some(StatePlanes::build(&self.grid, &demand, &supply)?);
        }
        Ok(self.planes.as_ref().expect("planes were just built"))
    }

    fn reject(&mut self, idx: usize, reason: RejectReason) -> Result<()> {
        self.requests[idx].transition(RequestStatus::Rejected(reason))?;
        match reason {
            RejectReason::Radius => self.counts.radius += 1,
            RejectReason::Customer => self.counts.customer += 1,
            RejectReason::Expired => self.counts.expired += 1,
            RejectReason::Degenerate => self.counts.degenerate += 1,
        }
        Ok(())
    }

    /// Sends idle vehicles to policy-chosen zones. With `entering` only
    /// vehicles that have never been dispatched are considered.
    fn dispatch(&mut self, entering: bool) -> Result<u64> {
        let now = self.minute();
        let threshold = self.cfg.idle_threshold;
        let idle: Vec<IdleVehicle> = self
            .vehicles
            .iter()
            .filter(|v| v.on_duty(now) && v.route.is_empty() && v.dispatch_target.is_none())
            .filter(|v| v.newly_entered || (!entering && v.idle_minutes > threshold))
            .map(|v| IdleVehicle {
                id: v.id,
                zone: v.zone,
                idle_minutes: v.idle_minutes,
                newly_entered: v.newly_entered,
            })
            .collect();
        if idle.is_empty() {
            return Ok(0);
        }
        let mode = match self.cfg.policy_mode {
            PolicyMode::Greedy => Mode::Greedy,
            PolicyMode::Explore => Mode::Explore,
            PolicyMode::Uniform => Mode::Uniform,
        };
        self.state_planes()?;
        let planes = self.planes.as_ref().expect("planes built above");
        let stream = self.tick * 2 + u64::from(!entering);
        let decisions = dispatch_idle(&idle, threshold, &self.grid, planes, &self.policy, mode, self.cfg.seed, stream)?;
        let weights = self.cfg.reward_weights();
        for d in &decisions {
            if self.trace {
                self.log.decisions.push(DecisionRow {
                    tick: self.tick,
                    vehicle: d.vehicle.0,
                    from: d.from,
                    target: d.target,
                    action: d.action,
                    entering,
                });
            }
            let v = &mut self.vehicles[d.vehicle.0 as usize];
            if let Some((state, action)) = v.pending.take() {
                if self.cfg.learn {
                    let reward = compute_reward(&v.reward, &weights);
                    self.policy.remember(Transition { state, action, reward, next: Some(d.state.clone()) });
                }
            }
            v.reward = Default::default();
            v.pending = Some((d.state.clone(), d.action));
            v.newly_entered = false;
            v.idle_minutes = 0.0;
            v.dispatch_target = (d.target != v.zone).then_some(d.target);
        }
        Ok(decisions.len() as u64)
    }

    fn commit(&mut self, plan: Plan, row: &mut TickRow) -> Result<()> {
        let now = self.minute();
        let speed = self.speed();
        let minutes = |km: f64| km / speed * 60.0;
        let vi = plan.vehicle.0 as usize;
        let mut accepted = false;
        for offer in &plan.offers {
            let idx = offer.request;
            if let (true, Some(q)) = (self.trace, offer.quote) {
                self.log.quotes.push(QuoteRow {
                    tick: self.tick,
                    vehicle: plan.vehicle.0,
                    request: q.request.0,
                    initial_price: q.initial_price,
                    price: q.price,
                    marginal_km: q.marginal_km,
                    sharing: q.sharing,
                    wait_minutes: q.wait_minutes,
                    utility: q.utility,
                    accepted: q.accepted,
                });
            }
            match offer.outcome {
                OfferOutcome::Accepted => {
                    let q = offer.quote.expect("accepted offers carry a quote");
                    self.requests[idx].transition(RequestStatus::Matched)?;
                    self.counts.served += 1;
                    self.vehicle_of[idx] = Some(plan.vehicle);
                    self.price_of[idx] = Some(q.price);
                    let r = &self.requests[idx];
                    let v = &mut self.vehicles[vi];
                    let solo = self.grid.weight(v.zone, r.origin) + self.grid.weight(r.origin, r.destination);
                    v.riders.insert(
                        r.id,
                        RiderInfo {
                            request_time: r.request_time,
                            passengers: r.passengers,
                            price: q.price,
                            committed_at: now,
                            boarded_at: None,
                            solo_drop: now + minutes(solo),
                            estimated_drop: f64::NAN,
                            xi: 0.0,
                        },
                    );
                    v.reward.served += 1.0;
                    accepted = true;
                }
                OfferOutcome::Declined => {
                    self.requests[idx].requeues += 1;
                    if self.requests[idx].requeues > self.cfg.max_requeues {
                        self.reject(idx, RejectReason::Customer)?;
                    } else {
                        self.queue.push(idx);
                    }
                }
                OfferOutcome::Infeasible | OfferOutcome::TooLate => self.queue.push(idx),
            }
        }
        let _ = row;
        if !accepted {
            return Ok(());
        }
        let v = &mut self.vehicles[vi];
        if v.route.is_empty() {
            v.reward.activation += 1.0;
        }
        v.route = plan.route;
        v.dispatch_target = None;
        v.idle_minutes = 0.0;
        v.newly_entered = false;
        for (pos, s) in v.route.stops().iter().enumerate() {
            if s.kind != StopKind::Dropoff {
                continue;
            }
            let est = now + minutes(v.route.distance_to(pos, &self.grid));
            let rider = v.riders.get_mut(&s.request).ok_or_else(|| {
                Error::Invariant(format!("vehicle {} routes {} without a rider record", v.id, s.request))
            })?;
            let increase =
                if rider.estimated_drop.is_nan() { est - rider.solo_drop } else { est - rider.estimated_drop };
            v.reward.extra_delay_minutes += increase.max(0.0);
            rider.estimated_drop = est;
            rider.xi = est - rider.solo_drop;
        }
        Ok(())
    }

    fn move_fleet(&mut self, row: &mut TickRow) -> Result<()> {
        let now = self.minute();
        let dt = self.cfg.delta_t;
        let speed = self.cfg.speed_kmh;
        let gas = self.cfg.gas_price;
        let mut wait_sum = 0.0;
        let Self { vehicles, requests, index, counts, wait_of, grid, .. } = self;
        for v in vehicles.iter_mut().filter(|v| v.present()) {
            let before = v.status();
            let mv = advance_vehicle(v, now, dt, grid, speed);
            v.reward.profit -= v.profile.fuel_cost(mv.km, gas);
            if before == VehicleStatus::Dispatching {
                v.reward.dispatch_minutes += mv.km / speed * 60.0;
            }
            for ev in &mv.events {
                let idx = index[&ev.stop.request];
                let r = &mut requests[idx];
                let rider = v.riders.get_mut(&r.id).ok_or_else(|| {
                    Error::Invariant(format!("vehicle {} reached a stop of {} without a rider record", v.id, r.id))
                })?;
                match ev.stop.kind {
                    StopKind::Pickup => {
                        r.transition(RequestStatus::Onboard)?;
                        rider.boarded_at = Some(ev.minute);
                        let wait = (ev.minute - r.request_time) * 60.0;
                        wait_of[idx] = Some(wait);
                        wait_sum += wait;
                        row.pickups += 1;
                        counts.boarded += u64::from(r.passengers);
                    }
                    StopKind::Dropoff => {
                        r.transition(RequestStatus::Completed)?;
                        let rider = v.riders.remove(&r.id).expect("rider present");
                        v.earnings += rider.price;
                        v.reward.profit += rider.price;
                        v.riders_served += 1;
                        counts.alighted += u64::from(r.passengers);
                    }
                }
            }
            if v.route.is_empty() && v.dispatch_target == Some(v.zone) {
                v.dispatch_target = None;
                v.idle_minutes = 0.0;
            }
            let after = v.status();
            if before == VehicleStatus::Serving || after == VehicleStatus::Serving {
                v.occupied_minutes += dt;
            } else {
                v.idle_total_minutes += dt;
            }
            if after == VehicleStatus::Idle {
                v.idle_minutes += dt;
            }
        }
        row.mean_wait_s = if row.pickups > 0 { wait_sum / row.pickups as f64 } else { 0.0 };
        Ok(())
    }

    fn retire(&mut self, end: f64) {
        let weights = self.cfg.reward_weights();
        for v in self.vehicles.iter_mut().filter(|v| v.present()) {
            if end >= v.exits_at && v.route.is_empty() {
                v.left_at = Some(end);
                v.dispatch_target = None;
                if let Some((state, action)) = v.pending.take() {
                    if self.cfg.learn {
                        let reward = compute_reward(&v.reward, &weights);
                        self.policy.remember(Transition { state, action, reward, next: None });
                    }
                }
            }
        }
    }

    fn check(&self) -> Result<()> {
        let mut onboard = 0u64;
        for v in self.vehicles.iter().filter(|v| v.present()) {
            let cap = v.profile.capacity;
            let bad = if v.route.max_load() > cap || v.onboard() > cap || v.load() > cap {
                Some("capacity exceeded")
            } else if v.riders.keys().any(|r| !v.route.contains(*r)) {
                Some("rider without stops")
            } else if v.route.stops().iter().any(|s| !v.riders.contains_key(&s.request)) {
                Some("stop without rider")
            } else {
                None
            };
            if let Some(what) = bad {
                return Err(Error::Invariant(format!(
                    "tick {}: {what} for vehicle {} (type {}, cap {cap}) in zone {}, onboard {}, load {}, route {}",
                    self.tick,
                    v.id,
                    v.profile.rank,
                    v.zone,
                    v.onboard(),
                    v.load(),
                    v.route
                )));
            }
            onboard += u64::from(v.onboard());
        }
        let c = &self.counts;
        if c.boarded - c.alighted != onboard {
            return Err(Error::Invariant(format!(
                "tick {}: {} boarded, {} alighted, {onboard} on board",
                self.tick, c.boarded, c.alighted
            )));
        }
        let accounted = c.served + c.radius + c.customer + c.expired + c.degenerate + self.queue.len() as u64;
        if accounted != c.total {
            return Err(Error::Invariant(format!(
                "tick {}: {} requests arrived but {accounted} are accounted for ({c:?}, {} queued)",
                self.tick,
                c.total,
                self.queue.len()
            )));
        }
        Ok(())
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.cfg.delta_t;
        let now = self.minute();
        let end = now + dt;
        self.planes = None;
        let mut row = TickRow { tick: self.tick, minute: now, ..TickRow::default() };

        // Requests of this tick plus those carried over.
        let mut batch = std::mem::take(&mut self.queue);
        while self.next_arrival < self.requests.len() && self.requests[self.next_arrival].request_time < end {
            let i = self.next_arrival;
            self.next_arrival += 1;
            let r = &self.requests[i];
            self.counts.total += 1;
            row.new_requests += 1;
            self.history.record(r.request_time, r.origin);
            if r.status == RequestStatus::Rejected(RejectReason::Degenerate) {
                self.counts.degenerate += 1;
            } else {
                batch.push(i);
            }
        }
        let mut live = Vec::with_capacity(batch.len());
        for i in batch {
            let r = &self.requests[i];
            if now - r.request_time > r.delay_tolerance {
                self.reject(i, RejectReason::Expired)?;
            } else {
                live.push(i);
            }
        }
        live.sort_by(|&a, &b| {
            let (ra, rb) = (&self.requests[a], &self.requests[b]);
            ra.request_time.total_cmp(&rb.request_time).then(ra.id.cmp(&rb.id))
        });

        // Entering vehicles.
        while self.arrivals.front().is_some_and(|v| v.entered_at < end) {
            let v = self.arrivals.pop_front().expect("front exists");
            self.vehicles.push(v);
        }
        let dispatching = self.cfg.dispatch && now >= self.cfg.warmup_minutes;
        if dispatching {
            row.decisions += self.dispatch(true)?;
        }
        if self.cfg.pricing && self.tick.is_multiple_of(self.cfg.hotspot_refresh as u64) {
            let zones = self.grid.zone_count();
            self.state_planes()?;
            let planes = self.planes.as_ref().expect("planes built above");
            let values = zone_values(planes, &self.policy, zones)?;
            self.hotspots = build_hotspots(&values, self.cfg.lambda)?;
        }

        // Matching.
        let candidates: Vec<Candidate> = self
            .vehicles
            .iter()
            .filter(|v| v.on_duty(now))
            .map(|v| Candidate {
                id: v.id,
                zone: v.zone,
                load: v.load(),
                capacity: v.profile.capacity,
                route_empty: v.route.is_empty(),
            })
            .collect();
        let requests: Vec<&Request<f64>> = live.iter().map(|&i| &self.requests[i]).collect();
        let params = AssignParams { radius_km: self.cfg.radius_km, pooling: self.cfg.ridesharing };
        let assignment = greedy_assign(&requests, &candidates, &self.grid, &params);
        for id in &assignment.rejected {
            self.reject(self.index[id], RejectReason::Radius)?;
        }

        // Pricing, insertion and customer decisions, one vehicle per task.
        let plans: Vec<Plan> = {
            let ctx = PlanCtx {
                cfg: &self.cfg,
                grid: &self.grid,
                requests: &self.requests,
                index: &self.index,
                hotspots: &self.hotspots,
                now,
            };
            let vehicles = &self.vehicles;
            assignment
                .lists
                .par_iter()
                .map(|(id, list)| plan_vehicle(&vehicles[id.0 as usize], list, &ctx))
                .collect::<Result<_>>()?
        };
        for plan in plans {
            self.commit(plan, &mut row)?;
        }

        self.move_fleet(&mut row)?;
        self.planes = None;

        if dispatching {
            row.decisions += self.dispatch(false)?;
        }
        self.retire(end);

        if self.cfg.learn {
            self.policy.advance(row.decisions);
            if self.tick.is_multiple_of(self.cfg.train_every as u64) {
                let (mut loss, mut qmax, mut n) = (0.0, 0.0, 0);
                for _ in 0..self.cfg.train_steps {
                    if let Some(s) = self.policy.train_step(&mut self.rng)? {
                        loss += s.loss;
                        qmax += s.mean_qmax;
                        n += 1;
                    }
                }
                if n > 0 {
                    row.loss = loss / n as f64;
                    row.mean_qmax = qmax / n as f64;
                }
            }
        }

        self.check()?;
        self.fill_row(&mut row);
        self.log.ticks.push(row);
        self.tick += 1;
        Ok(())
    }

    fn fill_row(&self, row: &mut TickRow) {
        let c = &self.counts;
        let now = self.minute();
        row.total_requests = c.total;
        row.served = c.served;
        row.rejected_radius = c.radius;
        row.rejected_customer = c.customer;
        row.expired = c.expired;
        row.waiting = self.queue.len() as u64;
        row.accept_rate = c.served as f64 / c.total.max(1) as f64;
        let gas = self.cfg.gas_price;
        let mut available = 0u64;
        for v in &self.vehicles {
            row.profit_total += v.earnings - v.fuel_cost(gas);
            row.km_total += v.distance_km;
            if !v.present() {
                continue;
            }
            row.active_vehicles += 1;
            row.onboard_riders += u64::from(v.onboard());
            match v.status() {
                VehicleStatus::Serving => row.occupied_vehicles += 1,
                VehicleStatus::Dispatching => row.dispatching_vehicles += 1,
                VehicleStatus::Idle => row.idle_vehicles += 1,
            }
            if v.on_duty(now) && v.load() < v.profile.capacity {
                available += 1;
            }
        }
        let (prev_profit, prev_km) = self.log.ticks.last().map_or((0.0, 0.0), |p| (p.profit_total, p.km_total));
        let vehicle_hours = row.active_vehicles.max(1) as f64 * self.cfg.delta_t / 60.0;
        row.profit_per_hour = (row.profit_total - prev_profit) / vehicle_hours;
        row.km_per_hour = (row.km_total - prev_km) / vehicle_hours;
        let demand = self.history.predict::<f64>(now, 0, self.cfg.delta_t).series.step_total(0);
        row.mismatch = demand - available as f64;
    }

    /// Runs the configured number of steps from the current tick.
    pub fn run_steps(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Per-vehicle and per-rider records as of now.
    pub fn snapshot_log(&self) -> MetricsLog {
        let end = self.minute();
        let gas = self.cfg.gas_price;
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| {
                let left = v.left_at.unwrap_or(end);
                let fuel = v.fuel_cost(gas);
                VehicleRow {
                    id: v.id.0,
                    type_rank: v.profile.rank,
                    capacity: v.profile.capacity,
                    entered_at: v.entered_at,
                    left_at: left,
                    duty_hours: ((left - v.entered_at) / 60.0).max(0.0),
                    occupied_hours: v.occupied_minutes / 60.0,
                    idle_hours: v.idle_total_minutes / 60.0,
                    earnings: v.earnings,
                    fuel_cost: fuel,
                    profit: v.earnings - fuel,
                    distance_km: v.distance_km,
                    riders: v.riders_served,
                }
            })
            .collect();
        let riders = self.requests[..self.next_arrival]
            .iter()
            .enumerate()
            .map(|(i, r)| RiderRow {
                id: r.id.0,
                request_time: r.request_time,
                origin: r.origin,
                destination: r.destination,
                passengers: r.passengers,
                status: status_name(r.status),
                vehicle: self.vehicle_of[i].map(|v| v.0),
                price: self.price_of[i],
                wait_s: self.wait_of[i],
            })
            .collect();
        MetricsLog {
            ticks: self.log.ticks.clone(),
            vehicles,
            riders,
            quotes: self.log.quotes.clone(),
            decisions: self.log.decisions.clone(),
        }
    }

    /// Runs to `steps` and returns the log and the (possibly trained) policy.
    pub fn run(mut self) -> Result<RunOutput> {
        let remaining = self.cfg.steps.saturating_sub(self.tick as usize);
        self.run_steps(remaining)?;
        Ok(RunOutput { log: self.snapshot_log(), fingerprint: self.fingerprint, policy: self.policy })
    }
}

fn status_name(s: RequestStatus) -> String {
    match s {
        RequestStatus::Waiting => "waiting".into(),
        RequestStatus::Matched => "matched".into(),
        RequestStatus::Onboard => "onboard".into(),
        RequestStatus::Completed => "completed".into(),
        RequestStatus::Rejected(r) => format!("rejected-{}", format!("{r:?}").to_lowercase()),
    }
}

/// Builds and runs a simulation.
pub fn run(cfg: SimConfig, policy: Option<QFunction<f64>>) -> Result<RunOutput> {
    Simulation::new(cfg, policy)?.run()
}
