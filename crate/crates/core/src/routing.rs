//! Stop sequences and minimum-increase insertion of new requests.
//!
//! A route is anchored at the vehicle's current zone. Its cost is the path
//! weight from that anchor through every stop and is recomputed on each
//! mutation together with the per-stop load prefix.

use std::fmt;

use crate::demand::{Request, RequestId};
use crate::error::{domain, Error, Result};
use crate::geo::{Metric, ZoneId};
use crate::matching::capacity_prefix;
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stop {
    pub zone: ZoneId,
    pub kind: StopKind,
    pub request: RequestId,
    pub passengers: u32,
}

impl Stop {
    pub fn pickup(request: RequestId, zone: ZoneId, passengers: u32) -> Self {
        Self { zone, kind: StopKind::Pickup, request, passengers }
    }

    pub fn dropoff(request: RequestId, zone: ZoneId, passengers: u32) -> Self {
        Self { zone, kind: StopKind::Dropoff, request, passengers }
    }
}

/// What insertion needs to know about a request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trip {
    pub id: RequestId,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub passengers: u32,
}

impl<R> From<&Request<R>> for Trip {
    fn from(r: &Request<R>) -> Self {
        Self { id: r.id, origin: r.origin, destination: r.destination, passengers: r.passengers }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Route<R> {
    start: ZoneId,
    stops: Vec<Stop>,
    cost: R,
    onboard: u32,
    loads: Vec<u32>,
}

impl<R: Real> Route<R> {
    pub fn new(start: ZoneId) -> Self {
        Self { start, stops: Vec::new(), cost: R::zero(), onboard: 0, loads: Vec::new() }
    }

    /// Builds a route from explicit stops. Drop-offs without a matching
    /// pickup are riders already on board.
    pub fn from_stops<M: Metric<R>>(start: ZoneId, stops: Vec<Stop>, metric: &M) -> Result<Self> {
        let onboard = onboard_riders(&stops);
        let mut route = Self { start, stops, cost: R::zero(), onboard, loads: Vec::new() };
        route.refresh(metric)?;
        Ok(route)
    }

    fn refresh<M: Metric<R>>(&mut self, metric: &M) -> Result<()> {
        self.loads = capacity_prefix(&self.stops, self.onboard)?;
        self.cost = path_cost(metric, self.start, &self.stops);
        Ok(())
    }

    pub fn start(&self) -> ZoneId {
        self.start
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Path weight from the anchor through every stop, km.
    pub fn cost(&self) -> R {
        self.cost
    }

    /// Riders on board at the anchor.
    pub fn onboard(&self) -> u32 {
        self.onboard
    }

    /// Load after each stop.
    pub fn loads(&self) -> &[u32] {
        &self.loads
    }

    /// Load on the leg that ends at stop `index` (the anchor load for 0).
    pub fn load_before(&self, index: usize) -> u32 {
        if index == 0 {
            self.onboard
        } else {
            self.loads[index - 1]
        }
    }

    pub fn max_load(&self) -> u32 {
        self.loads.iter().copied().fold(self.onboard, u32::max)
    }

    pub fn last_zone(&self) -> ZoneId {
        self.stops.last().map_or(self.start, |s| s.zone)
    }

    pub fn contains(&self, request: RequestId) -> bool {
        self.stops.iter().any(|s| s.request == request)
    }

    pub fn position(&self, request: RequestId, kind: StopKind) -> Option<usize> {
        self.stops.iter().position(|s| s.request == request && s.kind == kind)
    }

    /// Requests with a pickup still ahead.
    pub fn pending_pickups(&self) -> impl Iterator<Item = &Stop> {
        self.stops.iter().filter(|s| s.kind == StopKind::Pickup)
    }

    /// Moves the anchor, e.g. after the vehicle advanced one cell.
    pub fn set_start<M: Metric<R>>(&mut self, start: ZoneId, metric: &M) {
        self.start = start;
        self.cost = path_cost(metric, self.start, &self.stops);
    }

    /// Removes the first stop once the vehicle has reached it. The anchor
    /// becomes that stop's zone.
    pub fn complete_front<M: Metric<R>>(&mut self, metric: &M) -> Option<Stop> {
        if self.stops.is_empty() {
            return None;
        }
        let stop = self.stops.remove(0);
        match stop.kind {
            StopKind::Pickup => self.onboard += stop.passengers,
            StopKind::Dropoff => self.onboard -= stop.passengers,
        }
        self.start = stop.zone;
        self.loads.remove(0);
        self.cost = path_cost(metric, self.start, &self.stops);
        Some(stop)
    }

    /// Route with both stops of `request` removed.
    pub fn without<M: Metric<R>>(&self, request: RequestId, metric: &M) -> Result<Self> {
        let stops: Vec<Stop> = self.stops.iter().copied().filter(|s| s.request != request).collect();
        let mut out = Self { start: self.start, stops, cost: R::zero(), onboard: self.onboard, loads: Vec::new() };
        out.refresh(metric)?;
        Ok(out)
    }

    /// Km from the anchor to the given stop along the route.
    pub fn distance_to<M: Metric<R>>(&self, index: usize, metric: &M) -> R {
        let mut prev = self.start;
        let mut km = R::zero();
        for s in &self.stops[..=index] {
            km += metric.weight(prev, s.zone);
            prev = s.zone;
        }
        km
    }

    pub fn zones(&self) -> Vec<ZoneId> {
        std::iter::once(self.start).chain(self.stops.iter().map(|s| s.zone)).collect()
    }
}

impl<R: Real> fmt::Display for Route<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}", self.start)?;
        for s in &self.stops {
            let tag = match s.kind {
                StopKind::Pickup => 'o',
                StopKind::Dropoff => 'd',
            };
            write!(f, " {tag}{}@{}", s.request.0, s.zone)?;
        }
        write!(f, "] {:.3} km", self.cost)
    }
}

fn onboard_riders(stops: &[Stop]) -> u32 {
    stops
        .iter()
        .filter(|s| {
            s.kind == StopKind::Dropoff && !stops.iter().any(|p| p.kind == StopKind::Pickup && p.request == s.request)
        })
        .map(|s| s.passengers)
        .sum()
}

fn path_cost<R: Real, M: Metric<R>>(metric: &M, start: ZoneId, stops: &[Stop]) -> R {
    let mut prev = start;
    let mut total = R::zero();
    for s in stops {
        total += metric.weight(prev, s.zone);
        prev = s.zone;
    }
    total
}

/// Result of inserting one request.
#[derive(Clone, Debug, PartialEq)]
pub struct Insertion<R> {
    pub route: Route<R>,
    /// Full path weight of the new route.
    pub cost: R,
    /// Old cost plus the two accepted local deltas.
    pub predicted_cost: R,
    /// Index of the new pickup in the new route.
    pub origin_pos: usize,
    /// Index of the new drop-off in the new route.
    pub dest_pos: usize,
    /// Candidate positions whose cost was evaluated.
    pub evaluations: usize,
}

fn infeasible(route_len: usize, trip: &Trip, capacity: u32) -> Error {
    Error::InfeasibleRoute(format!(
        "no capacity-feasible position for {} ({} riders, capacity {capacity}) in a {route_len}-stop route",
        trip.id, trip.passengers
    ))
}

fn check_new<R: Real>(route: &Route<R>, trip: &Trip) -> Result<()> {
    if route.contains(trip.id) {
        return Err(domain(format!("{} is already in the route", trip.id)));
    }
    if trip.passengers == 0 {
        return Err(domain(format!("{} has no passengers", trip.id)));
    }
    Ok(())
}

/// Two-stage insertion: the pickup goes where it adds the least distance
/// among positions with a free seat, then the drop-off goes at the cheapest
/// later position that keeps every leg in between within capacity. Ties keep
/// the earliest position. Existing stops keep their relative order.
pub fn insert_request<R: Real, M: Metric<R>>(
    route: &Route<R>,
    trip: &Trip,
    capacity: u32,
    metric: &M,
) -> Result<Insertion<R>> {
    check_new(route, trip)?;
    let p = trip.passengers;
    let (o, d) = (trip.origin, trip.destination);
    let n = route.len();
    if p > capacity {
        return Err(infeasible(n, trip, capacity));
    }
    let w = |a: ZoneId, b: ZoneId| metric.weight(a, b);
    if n == 0 {
        // Nothing to scan: the vehicle goes straight to the pickup.
        let stops = vec![Stop::pickup(trip.id, o, p), Stop::dropoff(trip.id, d, p)];
        let new_route = Route::from_stops_with_onboard(route.start, stops, route.onboard, metric)?;
        return Ok(Insertion {
            cost: new_route.cost,
            predicted_cost: w(route.start, o) + w(o, d),
            route: new_route,
            origin_pos: 0,
            dest_pos: 1,
            evaluations: 1,
        });
    }
    let node = |i: usize| if i == 0 { route.start } else { route.stops[i - 1].zone };
    let mut evaluations = 0usize;

    // Stage 1: pickup position x, meaning the pickup precedes old stop x.
    let mut best: Option<(usize, R)> = None;
    for x in 0..=n {
        if route.load_before(x) + p > capacity {
            continue;
        }
        evaluations += 1;
        let prev = node(x);
        let delta = if x < n {
            let next = route.stops[x].zone;
            w(prev, o) + w(o, next) - w(prev, next)
        } else {
            w(prev, o)
        };
        if best.is_none_or(|(_, c)| delta < c) {
            best = Some((x, delta));
        }
    }
    let (x, delta_o) = best.ok_or_else(|| infeasible(n, trip, capacity))?;

    // Stage 2: drop-off position y in the route with the pickup inserted.
    let mut with_o = route.stops.clone();
    with_o.insert(x, Stop::pickup(trip.id, o, p));
    let mut best_d: Option<(usize, R)> = None;
    let mut peak = route.load_before(x) + p;
    for y in x + 1..=n + 1 {
        if peak > capacity {
            break;
        }
        evaluations += 1;
        let prev = with_o[y - 1].zone;
        let delta = if y <= n {
            let next = with_o[y].zone;
            w(prev, d) + w(d, next) - w(prev, next)
        } else {
            w(prev, d)
        };
        if best_d.is_none_or(|(_, c)| delta < c) {
            best_d = Some((y, delta));
        }
        if y <= n {
            peak = peak.max(route.loads[y - 1] + p);
        }
    }
    let (y, delta_d) = best_d.ok_or_else(|| infeasible(n, trip, capacity))?;
    with_o.insert(y, Stop::dropoff(trip.id, d, p));

    let predicted_cost = route.cost + delta_o + delta_d;
    let new_route = Route::from_stops_with_onboard(route.start, with_o, route.onboard, metric)?;
    if new_route.max_load() > capacity {
        return Err(Error::Invariant(format!("insertion produced overloaded route {new_route}")));
    }
    Ok(Insertion { cost: new_route.cost, route: new_route, predicted_cost, origin_pos: x, dest_pos: y, evaluations })
}

impl<R: Real> Route<R> {
    fn from_stops_with_onboard<M: Metric<R>>(
        start: ZoneId,
        stops: Vec<Stop>,
        onboard: u32,
        metric: &M,
    ) -> Result<Self> {
        let mut route = Self { start, stops, cost: R::zero(), onboard, loads: Vec::new() };
        route.refresh(metric)?;
        Ok(route)
    }
}

/// Insertion without route optimization: the pickup goes right after the
/// last pending pickup and the drop-off is appended at the end.
pub fn insert_unoptimized<R: Real, M: Metric<R>>(
    route: &Route<R>,
    trip: &Trip,
    capacity: u32,
    metric: &M,
) -> Result<Insertion<R>> {
    check_new(route, trip)?;
    let x = route.stops.iter().rposition(|s| s.kind == StopKind::Pickup).map_or(0, |i| i + 1);
    let mut stops = route.stops.clone();
    stops.insert(x, Stop::pickup(trip.id, trip.origin, trip.passengers));
    stops.push(Stop::dropoff(trip.id, trip.destination, trip.passengers));
    let y = stops.len() - 1;
    let new_route = Route::from_stops_with_onboard(route.start, stops, route.onboard, metric)?;
    if new_route.max_load() > capacity {
        return Err(infeasible(route.len(), trip, capacity));
    }
    Ok(Insertion {
        cost: new_route.cost,
        predicted_cost: new_route.cost,
        route: new_route,
        origin_pos: x,
        dest_pos: y,
        evaluations: 1,
    })
}

pub fn marginal_cost<R: Real>(old: &Route<R>, new: &Route<R>) -> R {
    new.cost - old.cost
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentCost<R> {
    /// Sum of the route costs after each successful insertion.
    pub total: R,
    pub route: Route<R>,
    pub skipped: Vec<RequestId>,
}

/// Inserts `trips` one after another and sums the resulting route costs.
/// Requests that cannot be inserted are skipped and reported.
pub fn assignment_cost<R: Real, M: Metric<R>>(
    route: &Route<R>,
    trips: &[Trip],
    capacity: u32,
    metric: &M,
) -> Result<AssignmentCost<R>> {
    let mut current = route.clone();
    let mut total = R::zero();
    let mut skipped = Vec::new();
    for trip in trips {
        match insert_request(&current, trip, capacity, metric) {
            Ok(ins) => {
                total += ins.cost;
                current = ins.route;
            }
            Err(Error::InfeasibleRoute(_)) => skipped.push(trip.id),
            Err(e) => return Err(e),
        }
    }
    Ok(AssignmentCost { total, route: current, skipped })
}
