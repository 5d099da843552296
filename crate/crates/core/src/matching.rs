//! Greedy request-to-vehicle assignment and the route load prefix.

use std::collections::BTreeMap;
use std::fmt;

use crate::demand::{Request, RequestId};
use crate::error::{Error, Result};
use crate::geo::{Metric, ZoneId};
use crate::num::Real;
use crate::routing::{Stop, StopKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Load after each stop: `+|r|` at a pickup, `-|r|` at a drop-off, starting
/// from `onboard_at_start`. Drop-offs whose pickup is not in the route belong
/// to riders already on board.
pub fn capacity_prefix(stops: &[Stop], onboard_at_start: u32) -> Result<Vec<u32>> {
    let mut seen: BTreeMap<RequestId, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (i, s) in stops.iter().enumerate() {
        let entry = seen.entry(s.request).or_default();
        let slot = match s.kind {
            StopKind::Pickup => &mut entry.0,
            StopKind::Dropoff => &mut entry.1,
        };
        if slot.is_some() {
            return Err(Error::InfeasibleRoute(format!("{} has two {:?} stops", s.request, s.kind)));
        }
        *slot = Some(i);
    }
    for (id, (o, d)) in &seen {
        match (o, d) {
            (Some(o), Some(d)) if d < o => {
                return Err(Error::InfeasibleRoute(format!("drop-off of {id} at stop {d} precedes its pickup at {o}")));
            }
            (Some(o), None) => {
                return Err(Error::InfeasibleRoute(format!("{id} is picked up at stop {o} but never dropped off")));
            }
            _ => {}
        }
    }

    let mut load = onboard_at_start as i64;
    let mut out = Vec::with_capacity(stops.len());
    for (i, s) in stops.iter().enumerate() {
        match s.kind {
            StopKind::Pickup => load += s.passengers as i64,
            StopKind::Dropoff => load -= s.passengers as i64,
        }
        if load < 0 {
            return Err(Error::InfeasibleRoute(format!(
                "load turns negative at stop {i}: {onboard_at_start} riders on board cannot cover the drop-offs"
            )));
        }
        out.push(load as u32);
    }
    Ok(out)
}

/// True iff the load never exceeds `c_max`, the starting load included.
pub fn capacity_feasible(stops: &[Stop], c_max: u32, onboard: u32) -> Result<bool> {
    let loads = capacity_prefix(stops, onboard)?;
    Ok(loads.iter().copied().fold(onboard, u32::max) <= c_max)
}

/// A vehicle as seen by the assignment step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: VehicleId,
    pub zone: ZoneId,
    /// Riders on board plus riders committed but not yet picked up.
    pub load: u32,
    pub capacity: u32,
    /// No stops left on the vehicle's route.
    pub route_empty: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssignParams<R> {
    pub radius_km: R,
    /// When off, a vehicle takes at most one request and only while its
    /// route is empty.
    pub pooling: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    /// Non-empty lists, ascending by vehicle id. Each list is ordered by
    /// distance from the vehicle's position to the request origin.
    pub lists: Vec<(VehicleId, Vec<RequestId>)>,
    /// Requests with no vehicle in range that had room.
    pub rejected: Vec<RequestId>,
}

impl Assignment {
    pub fn list(&self, vehicle: VehicleId) -> Option<&[RequestId]> {
        self.lists.iter().find(|(v, _)| *v == vehicle).map(|(_, l)| l.as_slice())
    }
}

/// Assigns requests in the given order to the nearest vehicle within
/// `radius_km` that still has room. After each assignment the winner's
/// bookkeeping position moves to the request origin and its load grows by
/// the party size. Ties go to the lowest vehicle id.
pub fn greedy_assign<R: Real, M: Metric<R>>(
    requests: &[&Request<R>],
    fleet: &[Candidate],
    metric: &M,
    params: &AssignParams<R>,
) -> Assignment {
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by_key(|&i| fleet[i].id);
    let mut loc: Vec<ZoneId> = fleet.iter().map(|c| c.zone).collect();
    let mut load: Vec<u32> = fleet.iter().map(|c| c.load).collect();
    let mut lists: Vec<Vec<&Request<R>>> = vec![Vec::new(); fleet.len()];
    let mut rejected = Vec::new();

    for &req in requests {
        let mut best: Option<(usize, R)> = None;
        for &i in &order {
            let c = &fleet[i];
            if !params.pooling && (!c.route_empty || !lists[i].is_empty()) {
                continue;
            }
            if load[i] + req.passengers > c.capacity {
                continue;
            }
            let d = metric.weight(loc[i], req.origin);
            if d > params.radius_km {
                continue;
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => {
                loc[i] = req.origin;
                load[i] += req.passengers;
                lists[i].push(req);
            }
            None => rejected.push(req.id),
        }
    }

    let mut out = Vec::new();
    for &i in &order {
        if lists[i].is_empty() {
            continue;
        }
        let home = fleet[i].zone;
        let mut list = std::mem::take(&mut lists[i]);
        list.sort_by(|a, b| {
            metric.weight(home, a.origin).partial_cmp(&metric.weight(home, b.origin)).expect("finite distances")
        });
        out.push((fleet[i].id, list.into_iter().map(|r| r.id).collect()));
    }
    Assignment { lists: out, rejected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{Preferences, TripDefaults};
    use crate::geo::Grid;
    use proptest::prelude::*;

    fn defaults() -> TripDefaults<f64> {
        TripDefaults {
            delay_tolerance: 15.0,
            prefs: Preferences { pooling_weight: 15.0, delay_weight: 1.0, vehicle_type_weight: 4.0, compromise: 0.0 },
        }
    }

    fn req(id: u64, o: ZoneId, d: ZoneId, p: u32) -> Request<f64> {
        Request::new(RequestId(id), 0.0, o, d, p, &defaults())
    }

    fn cand(id: u32, zone: ZoneId, load: u32, capacity: u32) -> Candidate {
        Candidate { id: VehicleId(id), zone, load, capacity, route_empty: load == 0 }
    }

    fn params(pooling: bool) -> AssignParams<f64> {
        AssignParams { radius_km: 5.0, pooling }
    }

    #[test]
    fn prefix_walk() {
        let r1 = RequestId(1);
        let r2 = RequestId(2);
        let stops = [Stop::pickup(r1, 0, 2), Stop::pickup(r2, 1, 1), Stop::dropoff(r1, 2, 2), Stop::dropoff(r2, 3, 1)];
        assert_eq!(capacity_prefix(&stops, 0).unwrap(), vec![2, 3, 1, 0]);
        assert!(capacity_feasible(&stops, 4, 0).unwrap());
        assert!(!capacity_feasible(&stops, 2, 0).unwrap());
        assert_eq!(capacity_prefix(&[], 3).unwrap(), Vec::<u32>::new());
        assert!(capacity_feasible(&[], 3, 3).unwrap());
        assert!(!capacity_feasible(&[], 2, 3).unwrap());
    }

    #[test]
    fn prefix_rejects_bad_order() {
        let r1 = RequestId(1);
        let bad = [Stop::dropoff(r1, 2, 1), Stop::pickup(r1, 0, 1)];
        assert!(matches!(capacity_prefix(&bad, 0), Err(Error::InfeasibleRoute(_))));
        assert!(capacity_prefix(&[Stop::pickup(r1, 0, 1)], 0).is_err());
        // An onboard rider's drop-off needs the starting load to cover it.
        assert_eq!(capacity_prefix(&[Stop::dropoff(r1, 2, 2)], 2).unwrap(), vec![0]);
        assert!(capacity_prefix(&[Stop::dropoff(r1, 2, 2)], 1).is_err());
    }

    #[test]
    fn nearest_feasible_wins() {
        let g = Grid::new(1, 10, 1.0).unwrap();
        let r = req(0, 5, 9, 1);
        let fleet = [cand(0, 2, 0, 4), cand(1, 4, 0, 4)];
        let a = greedy_assign(&[&r], &fleet, &g, &params(true));
        assert_eq!(a.list(VehicleId(1)), Some(&[RequestId(0)][..]));
        assert!(a.rejected.is_empty());
    }

    #[test]
    fn out_of_radius_rejected() {
        let g = Grid::new(1, 10, 1.0).unwrap();
        let r = req(0, 7, 9, 1);
        let a = greedy_assign(&[&r], &[cand(0, 1, 0, 4)], &g, &params(true));
        assert_eq!(a.rejected, vec![RequestId(0)]);
        assert!(a.lists.is_empty());
    }

    #[test]
    fn full_vehicle_excluded() {
        let g = Grid::new(1, 10, 1.0).unwrap();
        let r = req(0, 3, 9, 1);
        let a = greedy_assign(&[&r], &[cand(0, 3, 4, 4)], &g, &params(true));
        assert_eq!(a.rejected, vec![RequestId(0)]);
    }

    #[test]
    fn ties_and_bookkeeping() {
        let g = Grid::new(1, 10, 1.0).unwrap();
        // Both vehicles one cell away; lower id wins. The winner now sits at
        // the origin, so it also wins the second request.
        let r0 = req(0, 5, 9, 1);
        let r1 = req(1, 5, 8, 1);
        let fleet = [cand(3, 6, 0, 4), cand(1, 4, 0, 4)];
        let a = greedy_assign(&[&r0, &r1], &fleet, &g, &params(true));
        assert_eq!(a.lists, vec![(VehicleId(1), vec![RequestId(0), RequestId(1)])]);
    }

    #[test]
    fn lists_sorted_by_proximity_to_vehicle() {
        let g = Grid::new(1, 12, 1.0).unwrap();
        let far = req(0, 4, 9, 1);
        let near = req(1, 1, 9, 1);
        let a = greedy_assign(&[&far, &near], &[cand(0, 0, 0, 4)], &g, &params(true));
        assert_eq!(a.lists[0].1, vec![RequestId(1), RequestId(0)]);
    }

    #[test]
    fn without_pooling_one_request_per_empty_vehicle() {
        let g = Grid::new(1, 10, 1.0).unwrap();
        let r0 = req(0, 2, 9, 1);
        let r1 = req(1, 2, 8, 1);
        let busy = Candidate { id: VehicleId(1), zone: 2, load: 1, capacity: 4, route_empty: false };
        let a = greedy_assign(&[&r0, &r1], &[cand(0, 2, 0, 4), busy], &g, &params(false));
        assert_eq!(a.lists, vec![(VehicleId(0), vec![RequestId(0)])]);
        assert_eq!(a.rejected, vec![RequestId(1)]);
    }

    fn brute_nearest(r: &Request<f64>, fleet: &[Candidate], g: &Grid<f64>) -> Option<VehicleId> {
        fleet
            .iter()
            .filter(|c| c.load + r.passengers <= c.capacity && g.weight(c.zone, r.origin) <= 5.0)
            .min_by(|a, b| {
                g.weight(a.zone, r.origin).partial_cmp(&g.weight(b.zone, r.origin)).unwrap().then(a.id.cmp(&b.id))
            })
            .map(|c| c.id)
    }

    proptest! {
        #[test]
        fn partition_capacity_and_permutation(
            zones in prop::collection::vec((0usize..49, 0u32..4), 1..=3),
            reqs in prop::collection::vec((0usize..49, 0usize..49, 1u32..=3), 1..=4),
            rot in 0usize..3,
        ) {
            let g = Grid::new(7, 7, 1.0).unwrap();
            let fleet: Vec<Candidate> =
                zones.iter().enumerate().map(|(i, &(z, l))| cand(i as u32, z, l, 4)).collect();
            let requests: Vec<Request<f64>> =
                reqs.iter().enumerate().map(|(i, &(o, d, p))| req(i as u64, o, d, p)).collect();
            let refs: Vec<&Request<f64>> = requests.iter().collect();
            let a = greedy_assign(&refs, &fleet, &g, &params(true));

            let mut seen: Vec<RequestId> = a.lists.iter().flat_map(|(_, l)| l.iter().copied()).collect();
            seen.extend(a.rejected.iter().copied());
            seen.sort();
            prop_assert_eq!(seen, requests.iter().map(|r| r.id).collect::<Vec<_>>());

            for (v, list) in &a.lists {
                let c = fleet.iter().find(|c| c.id == *v).unwrap();
                let extra: u32 = list.iter().map(|id| requests[id.0 as usize].passengers).sum();
                prop_assert!(c.load + extra <= c.capacity);
                let stops: Vec<Stop> = list
                    .iter()
                    .map(|id| Stop::pickup(*id, 0, requests[id.0 as usize].passengers))
                    .chain(list.iter().map(|id| Stop::dropoff(*id, 0, requests[id.0 as usize].passengers)))
                    .collect();
                prop_assert!(capacity_feasible(&stops, c.capacity, c.load).unwrap());
            }

            let mut shuffled = fleet.clone();
            shuffled.rotate_left(rot % fleet.len());
            prop_assert_eq!(&greedy_assign(&refs, &shuffled, &g, &params(true)), &a);

            let first = brute_nearest(&requests[0], &fleet, &g);
            let got = a.lists.iter().find(|(_, l)| l.contains(&requests[0].id)).map(|(v, _)| *v);
            prop_assert_eq!(got, first);
        }
    }
}
