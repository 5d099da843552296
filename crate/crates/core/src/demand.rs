//! Ride requests, trip ingestion, synthetic demand and the demand/supply
//! forecasts consumed by dispatch and pricing.

use std::io::Read;

use chrono::{NaiveDate, NaiveDateTime};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use crate::error::{config, Error, Result};
use crate::geo::{Grid, ZoneId};
use crate::num::Real;

pub const MINUTES_PER_DAY: usize = 1440;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestId(pub u64);

impl std::fmt::Display for RequestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Customer-side utility weights and compromise threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preferences<R> {
    /// Weight on `1 / occupancy` (pooling aversion).
    pub pooling_weight: R,
    /// Weight on `1 / waiting time`.
    pub delay_weight: R,
    /// Weight on the vehicle type rank.
    pub vehicle_type_weight: R,
    /// Money the customer is willing to concede.
    pub compromise: R,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// No vehicle with spare seats inside the matching radius.
    Radius,
    /// Declined by the customer after the re-queue budget ran out.
    Customer,
    /// Waited past its delay tolerance or re-queued too often.
    Expired,
    /// Origin equals destination.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestStatus {
    Waiting,
    Matched,
    Onboard,
    Completed,
    Rejected(RejectReason),
}

impl RequestStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Completed | Self::Rejected(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Request<R> {
    pub id: RequestId,
    /// Minutes since simulation start.
    pub request_time: R,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub passengers: u32,
    /// Minutes the customer is willing to wait for pickup.
    pub delay_tolerance: R,
    pub prefs: Preferences<R>,
    pub status: RequestStatus,
    /// Times the request went back to the queue.
    pub requeues: u32,
}

impl<R: Real> Request<R> {
    pub fn new(
        id: RequestId,
        request_time: R,
        origin: ZoneId,
        destination: ZoneId,
        passengers: u32,
        defaults: &TripDefaults<R>,
    ) -> Self {
        let status = if origin == destination {
            RequestStatus::Rejected(RejectReason::Degenerate)
        } else {
            RequestStatus::Waiting
        };
        Self {
            id,
            request_time,
            origin,
            destination,
            passengers,
            delay_tolerance: defaults.delay_tolerance,
            prefs: defaults.prefs,
            status,
            requeues: 0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.origin == self.destination
    }

    /// Moves the request forward in its lifecycle. Backward moves and moves
    /// out of a terminal state are refused.
    pub fn transition(&mut self, to: RequestStatus) -> Result<()> {
        use RequestStatus::*;
        let ok = matches!(
            (self.status, to),
            (Waiting, Matched)
                | (Matched, Onboard)
                | (Onboard, Completed)
                | (Waiting, Rejected(_))
                | (Matched, Rejected(_))
        );
        if !ok {
            return Err(Error::Invariant(format!(
                "request {} cannot move from {:?} to {:?}",
                self.id, self.status, to
            )));
        }
        self.status = to;
        Ok(())
    }
}

/// Per-request values used when a trip record does not override them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripDefaults<R> {
    pub delay_tolerance: R,
    pub prefs: Preferences<R>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowReject {
    /// 1-based line number in the source, header included.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct IngestReport<R> {
    pub requests: Vec<Request<R>>,
    pub rejects: Vec<RowReject>,
    /// Requests whose coordinates fell outside the grid.
    pub snapped: Vec<RequestId>,
}

enum RawTime {
    Minutes(f64),
    Stamp(NaiveDateTime),
}

struct RawTrip {
    id: u64,
    time: RawTime,
    passengers: u32,
    origin: (f64, f64),
    dest: (f64, f64),
    delay_tolerance: Option<f64>,
    delta: Option<f64>,
}

fn parse_time(s: &str) -> std::result::Result<RawTime, String> {
    if let Ok(m) = s.parse::<f64>() {
        if !m.is_finite() || m < 0.0 {
            return Err(format!("request_time {s} must be a non-negative number of minutes"));
        }
        return Ok(RawTime::Minutes(m));
    }
    let trimmed = s.trim_end_matches('Z');
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(trimmed, fmt) {
            return Ok(RawTime::Stamp(t));
        }
    }
    Err(format!("request_time {s:?} is neither minutes nor ISO-8601"))
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<RawTrip, String> {
    if rec.len() < 7 {
        return Err(format!("expected at least 7 fields, found {}", rec.len()));
    }
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
        field(i).parse::<f64>().map_err(|_| format!("{name} {:?} is not a number", field(i)))
    };
    let id = field(0).parse::<u64>().map_err(|_| format!("id {:?} is not an integer", field(0)))?;
    let time = parse_time(field(1))?;
    let passengers: i64 = field(2).parse().map_err(|_| format!("passengers {:?} is not an integer", field(2)))?;
    if passengers < 1 {
        return Err("passenger_count < 1".to_string());
    }
    let optional = |i: usize, name: &str| -> std::result::Result<Option<f64>, String> {
        match rec.get(i).map(str::trim) {
            None | Some("") => Ok(None),
            Some(_) => num(i, name).map(Some),
        }
    };
    Ok(RawTrip {
        id,
        time,
        passengers: passengers as u32,
        origin: (num(3, "origin_row")?, num(4, "origin_col")?),
        dest: (num(5, "dest_row")?, num(6, "dest_col")?),
        delay_tolerance: optional(7, "delay_tolerance")?,
        delta: optional(8, "delta")?,
    })
}

/// Reads trip records (`id,request_time,passengers,origin_row,origin_col,
/// dest_row,dest_col[,delay_tolerance,delta]`). Malformed rows are collected
/// in the report and skipped. ISO-8601 times are measured in minutes from
/// midnight of the earliest date found in the file.
pub fn ingest_trips<R: Real, T: Read>(
    source: T,
    grid: &Grid<R>,
    defaults: &TripDefaults<R>,
) -> Result<IngestReport<R>> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(source);
    let mut raws = Vec::new();
    let mut rejects = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        match rec {
            Ok(rec) => match parse_row(&rec) {
                Ok(raw) => raws.push(raw),
                Err(message) => rejects.push(RowReject { line, message }),
            },
            Err(e) => rejects.push(RowReject { line, message: e.to_string() }),
        }
    }

    let epoch: Option<NaiveDate> = raws
        .iter()
        .filter_map(|r| match r.time {
            RawTime::Stamp(t) => Some(t.date()),
            RawTime::Minutes(_) => None,
        })
        .min();

    let mut requests = Vec::with_capacity(raws.len());
    let mut snapped = Vec::new();
    for raw in raws {
        let minutes = match raw.time {
            RawTime::Minutes(m) => m,
            RawTime::Stamp(t) => {
                let start = epoch.expect("stamp present").and_hms_opt(0, 0, 0).expect("midnight");
                (t - start).num_milliseconds() as f64 / 60_000.0
            }
        };
        let (origin, o_out) = grid.snap(raw.origin.0, raw.origin.1);
        let (dest, d_out) = grid.snap(raw.dest.0, raw.dest.1);
        let id = RequestId(raw.id);
        if o_out || d_out {
            snapped.push(id);
        }
        let mut req = Request::new(id, R::of(minutes), origin, dest, raw.passengers, defaults);
        if let Some(tol) = raw.delay_tolerance {
            req.delay_tolerance = R::of(tol);
        }
        if let Some(delta) = raw.delta {
            req.prefs.compromise = R::of(delta);
        }
        requests.push(req);
    }
    requests.sort_by(|a, b| a.request_time.partial_cmp(&b.request_time).expect("finite times").then(a.id.cmp(&b.id)));
    Ok(IngestReport { requests, rejects, snapped })
}

/// Request arrival rates (requests per minute) for every zone and
/// time-of-day bin.
#[derive(Clone, Debug, PartialEq)]
pub struct RateProfile {
    zones: usize,
    bin_minutes: usize,
    /// `rates[bin][zone]`.
    rates: Vec<Vec<f64>>,
}

impl RateProfile {
    pub fn new(bin_minutes: usize, rates: Vec<Vec<f64>>) -> Result<Self> {
        if bin_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(bin_minutes) {
            return Err(config(format!("bin_minutes {bin_minutes} must divide a day")));
        }
        if rates.len() != MINUTES_PER_DAY / bin_minutes {
            return Err(config(format!(
                "rate profile has {} bins, expected {}",
                rates.len(),
                MINUTES_PER_DAY / bin_minutes
            )));
        }
        let zones = rates.first().map_or(0, Vec::len);
        for bin in &rates {
            if bin.len() != zones {
                return Err(config("rate profile bins disagree on zone count"));
            }
            if let Some(r) = bin.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
                return Err(config(format!("demand rate {r} must be finite and >= 0")));
            }
        }
        Ok(Self { zones, bin_minutes, rates })
    }

    /// The same per-zone rates at every time of day.
    pub fn stationary(zone_rates: Vec<f64>) -> Result<Self> {
        Self::new(MINUTES_PER_DAY, vec![zone_rates])
    }

    /// City-like profile: a uniform floor plus Gaussian bumps around
    /// `hotspots`, scaled by a two-peak daily curve so the fleet-wide mean is
    /// `mean_per_minute`.
    pub fn city<R: Real>(grid: &Grid<R>, hotspots: &[ZoneId], mean_per_minute: f64) -> Result<Self> {
        let n = grid.zone_count();
        let mut spatial = vec![0.25; n];
        for &h in hotspots {
            let hc = grid.cell(h)?;
            for (z, s) in spatial.iter_mut().enumerate() {
                let c = grid.cell_unchecked(z);
                let d2 = (c.row.abs_diff(hc.row).pow(2) + c.col.abs_diff(hc.col).pow(2)) as f64;
                *s += (-d2 / 8.0).exp();
            }
        }
        let total: f64 = spatial.iter().sum();
        let bin_minutes = 30;
        let bins = MINUTES_PER_DAY / bin_minutes;
        let daily: Vec<f64> = (0..bins)
            .map(|b| {
                let hour = (b as f64 + 0.5) * bin_minutes as f64 / 60.0;
                let bump = |mu: f64, sd: f64| (-(hour - mu).powi(2) / (2.0 * sd * sd)).exp();
                0.35 + bump(8.5, 1.5) + 0.9 * bump(18.0, 2.0) + 0.4 * bump(13.0, 2.5)
            })
            .collect();
        let daily_mean = daily.iter().sum::<f64>() / bins as f64;
        let rates = daily
            .iter()
            .map(|d| spatial.iter().map(|s| mean_per_minute * (d / daily_mean) * (s / total)).collect())
            .collect();
        Self::new(bin_minutes, rates)
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn rate(&self, minute_of_day: usize, zone: ZoneId) -> f64 {
        self.rates[(minute_of_day % MINUTES_PER_DAY) / self.bin_minutes][zone]
    }

    pub fn zone_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.zones];
        for bin in &self.rates {
            for (acc, r) in w.iter_mut().zip(bin) {
                *acc += r;
            }
        }
        w
    }
}

/// Knobs of the synthetic generator besides arrival rates.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    /// Relative attraction of each zone as a destination; uniform when empty.
    pub destination_weights: Vec<f64>,
    /// `passenger_weights[k]` is the relative frequency of `k + 1` riders.
    pub passenger_weights: Vec<f64>,
    /// Destinations further than this many cells are redrawn.
    pub max_trip_cells: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { destination_weights: Vec::new(), passenger_weights: vec![0.7, 0.2, 0.1], max_trip_cells: None }
    }
}

/// Poisson-samples requests zone by zone, one-minute tick by tick, over
/// `[0, minutes)`. Deterministic for a fixed seed.
pub fn generate_synthetic<R: Real>(
    seed: u64,
    profile: &RateProfile,
    minutes: usize,
    grid: &Grid<R>,
    spec: &SyntheticSpec,
    defaults: &TripDefaults<R>,
) -> Result<Vec<Request<R>>> {
    let n = grid.zone_count();
    if profile.zones() != n {
        return Err(config(format!("rate profile covers {} zones, grid has {n}", profile.zones())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dest_weights = if spec.destination_weights.is_empty() {
        vec![1.0; n]
    } else if spec.destination_weights.len() == n {
        spec.destination_weights.clone()
    } else {
        return Err(config("destination weights must cover every zone"));
    };
    let dest_dist = WeightedIndex::new(&dest_weights).map_err(|e| config(format!("destination weights: {e}")))?;
    let pax_dist =
        WeightedIndex::new(&spec.passenger_weights).map_err(|e| config(format!("passenger weights: {e}")))?;

    let mut out = Vec::new();
    let mut next_id = 0u64;
    for minute in 0..minutes {
        for origin in 0..n {
            let rate = profile.rate(minute, origin);
            if rate <= 0.0 {
                continue;
            }
            let count =
                Poisson::new(rate).map_err(|e| config(format!("poisson rate {rate}: {e}")))?.sample(&mut rng) as u64;
            for _ in 0..count {
                let destination = sample_destination(grid, origin, &dest_dist, spec.max_trip_cells, &mut rng);
                let passengers = pax_dist.sample(&mut rng) as u32 + 1;
                let offset: f64 = rng.random();
                let t = R::of(minute as f64 + offset * 0.999);
                out.push(Request::new(RequestId(next_id), t, origin, destination, passengers, defaults));
                next_id += 1;
            }
        }
    }
    out.sort_by(|a, b| a.request_time.partial_cmp(&b.request_time).expect("finite").then(a.id.cmp(&b.id)));
    Ok(out)
}

fn sample_destination<R: Real>(
    grid: &Grid<R>,
    origin: ZoneId,
    dist: &WeightedIndex<f64>,
    max_cells: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> ZoneId {
    for _ in 0..64 {
        let d = dist.sample(rng);
        if d != origin && max_cells.is_none_or(|m| grid.cells_apart(origin, d) <= m) {
            return d;
        }
    }
    // Fall back to a neighbouring zone.
    let alt = grid.offset(origin, 1, 0);
    if alt != origin {
        alt
    } else {
        grid.offset(origin, -1, 0).max(grid.offset(origin, 0, 1)).max(grid.offset(origin, 0, -1))
    }
}

/// Dense `steps x zones` table of non-negative values.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneSeries<R> {
    zones: usize,
    steps: usize,
    data: Vec<R>,
}

impl<R: Real> ZoneSeries<R> {
    pub fn zeros(steps: usize, zones: usize) -> Self {
        Self { zones, steps, data: vec![R::zero(); steps * zones] }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn get(&self, step: usize, zone: ZoneId) -> R {
        self.data[step * self.zones + zone]
    }

    pub fn step(&self, step: usize) -> &[R] {
        &self.data[step * self.zones..(step + 1) * self.zones]
    }

    fn add(&mut self, step: usize, zone: ZoneId, v: R) {
        self.data[step * self.zones + zone] += v;
    }

    fn set(&mut self, step: usize, zone: ZoneId, v: R) {
        self.data[step * self.zones + zone] = v;
    }

    pub fn step_total(&self, step: usize) -> R {
        self.step(step).iter().copied().sum()
    }
}

/// Expected requests per zone for each of the `horizon + 1` upcoming steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandForecast<R> {
    pub series: ZoneSeries<R>,
    /// No history was available; every entry is zero.
    pub cold_start: bool,
}

/// Vehicles expected to be available per zone for each upcoming step.
#[derive(Clone, Debug, PartialEq)]
pub struct SupplyForecast<R> {
    pub series: ZoneSeries<R>,
}

/// Request counts per (day, time-of-day bin, zone).
#[derive(Clone, Debug)]
pub struct DemandHistory {
    zones: usize,
    bin_minutes: usize,
    /// Indexed by `day * bins_per_day + bin`.
    counts: Vec<Vec<u32>>,
    totals: Vec<u64>,
    observed: u64,
}

impl DemandHistory {
    pub fn new(zones: usize, bin_minutes: usize) -> Result<Self> {
        if bin_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(bin_minutes) {
            return Err(config(format!("bin_minutes {bin_minutes} must divide a day")));
        }
        Ok(Self { zones, bin_minutes, counts: Vec::new(), totals: vec![0; zones], observed: 0 })
    }

    fn bins_per_day(&self) -> usize {
        MINUTES_PER_DAY / self.bin_minutes
    }

    pub fn record(&mut self, minute: f64, zone: ZoneId) {
        let slot = minute.max(0.0) as usize / self.bin_minutes;
        if self.counts.len() <= slot {
            self.counts.resize_with(slot + 1, || vec![0; self.zones]);
        }
        self.counts[slot][zone] += 1;
        self.totals[zone] += 1;
        self.observed += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.observed == 0
    }

    /// Mean count in `bin` over days `0..before_day`.
    pub fn bin_mean(&self, zone: ZoneId, bin: usize, before_day: usize) -> f64 {
        if before_day == 0 {
            return 0.0;
        }
        let per_day = self.bins_per_day();
        let sum: u64 = (0..before_day).filter_map(|d| self.counts.get(d * per_day + bin)).map(|c| c[zone] as u64).sum();
        sum as f64 / before_day as f64
    }

    /// Forecast starting at minute `t` for `horizon + 1` steps of `dt`
    /// minutes. Each entry is the expected number of requests in that step.
    pub fn predict<R: Real>(&self, t: f64, horizon: usize, dt: f64) -> DemandForecast<R> {
        let mut series = ZoneSeries::zeros(horizon + 1, self.zones);
        if self.is_empty() {
            return DemandForecast { series, cold_start: true };
        }
        let day = (t.max(0.0) as usize) / MINUTES_PER_DAY;
        let steps_per_bin = self.bin_minutes as f64 / dt;
        for step in 0..=horizon {
            let minute = t + step as f64 * dt;
            let bin = (minute.max(0.0) as usize % MINUTES_PER_DAY) / self.bin_minutes;
            for zone in 0..self.zones {
                let v = if day >= 1 {
                    self.bin_mean(zone, bin, day) / steps_per_bin
                } else {
                    self.totals[zone] as f64 / (t / dt).max(1.0)
                };
                series.set(step, zone, R::of(v));
            }
        }
        DemandForecast { series, cold_start: false }
    }
}

pub fn predict_demand<R: Real>(history: &DemandHistory, t: f64, horizon: usize, dt: f64) -> DemandForecast<R> {
    history.predict(t, horizon, dt)
}

/// What supply projection needs to know about one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupplyEntry<R> {
    pub zone: ZoneId,
    /// Serving vehicles: final drop-off zone and minutes until the route completes.
    pub busy_until: Option<(ZoneId, R)>,
    /// Minutes until the vehicle leaves the market, if within reach.
    pub exits_in: Option<R>,
}

/// Counts available vehicles per zone for `horizon + 1` steps. Idle vehicles
/// sit in their current zone; serving vehicles appear at their final drop-off
/// zone from the step their route completes (ETA rounded up to whole steps).
pub fn project_supply<R: Real>(fleet: &[SupplyEntry<R>], zones: usize, horizon: usize, dt: R) -> SupplyForecast<R> {
    let mut series = ZoneSeries::zeros(horizon + 1, zones);
    for (i, v) in fleet.iter().enumerate() {
        let (zone, from_step) = match v.busy_until {
            None => (v.zone, 0usize),
            Some((z, eta)) => {
                if !eta.is_finite() || eta < R::zero() || z >= zones {
                    log::warn!("supply projection skips vehicle entry {i}: bad route ETA {eta} to zone {z}");
                    continue;
                }
                (z, (eta / dt).ceil().to_usize().unwrap_or(usize::MAX))
            }
        };
        if zone >= zones {
            log::warn!("supply projection skips vehicle entry {i}: zone {zone} outside grid");
            continue;
        }
        let until_step = match v.exits_in {
            Some(e) => (e / dt).ceil().max(R::zero()).to_usize().unwrap_or(0).min(horizon + 1),
            None => horizon + 1,
        };
        for step in from_step.min(horizon + 1)..until_step {
            series.add(step, zone, R::one());
        }
    }
    SupplyForecast { series }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> TripDefaults<f64> {
        TripDefaults {
            delay_tolerance: 15.0,
            prefs: Preferences { pooling_weight: 15.0, delay_weight: 1.0, vehicle_type_weight: 4.0, compromise: 0.0 },
        }
    }

    const HEADER: &str = "id,request_time,passengers,origin_row,origin_col,dest_row,dest_col\n";

    #[test]
    fn ingest_direct_row() {
        let grid = Grid::new(5, 5, 1.0).unwrap();
        let csv = format!("{HEADER}0,2020-01-01T00:00:00,1,0,0,4,0\n");
        let rep = ingest_trips(csv.as_bytes(), &grid, &defaults()).unwrap();
        assert!(rep.rejects.is_empty());
        let r = &rep.requests[0];
        assert_eq!(r.passengers, 1);
        assert_eq!(r.origin, grid.zone_at(0, 0).unwrap());
        assert_eq!(r.destination, grid.zone_at(4, 0).unwrap());
        assert_eq!(r.request_time, 0.0);
    }

    #[test]
    fn ingest_rejects_zero_passengers_and_continues() {
        let grid = Grid::new(5, 5, 1.0).unwrap();
        let csv = format!("{HEADER}0,3,0,0,0,4,0\n1,4,2,0,0,1,1\n2,x,1,0,0,1,1\n");
        let rep = ingest_trips(csv.as_bytes(), &grid, &defaults()).unwrap();
        assert_eq!(rep.requests.len(), 1);
        assert_eq!(rep.rejects.len(), 2);
        assert_eq!(rep.rejects[0], RowReject { line: 2, message: "passenger_count < 1".into() });
        assert_eq!(rep.rejects[1].line, 4);
    }

    #[test]
    fn ingest_sorts_by_time() {
        let grid = Grid::new(5, 5, 1.0).unwrap();
        let csv = format!("{HEADER}0,5,1,0,0,1,0\n1,1,1,0,0,1,0\n2,3,1,0,0,1,0\n");
        let rep = ingest_trips(csv.as_bytes(), &grid, &defaults()).unwrap();
        let times: Vec<f64> = rep.requests.iter().map(|r| r.request_time).collect();
        assert_eq!(times, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn ingest_snaps_out_of_grid_and_reads_overrides() {
        let grid = Grid::new(3, 3, 1.0).unwrap();
        let csv = "id,request_time,passengers,origin_row,origin_col,dest_row,dest_col,delay_tolerance,delta\n\
                   7,2020-01-02T01:30:00,2,-1,0.6,9,2,4,2.5\n\
                   8,2020-01-01T23:00:00,1,1,1,1,1,,\n";
        let rep = ingest_trips(csv.as_bytes(), &grid, &defaults()).unwrap();
        assert_eq!(rep.snapped, vec![RequestId(7)]);
        let first = &rep.requests[0];
        assert_eq!(first.id, RequestId(8));
        assert_eq!(first.request_time, 23.0 * 60.0);
        assert_eq!(first.status, RequestStatus::Rejected(RejectReason::Degenerate));
        let second = &rep.requests[1];
        assert_eq!(second.request_time, 1440.0 + 90.0);
        assert_eq!(second.origin, grid.zone_at(0, 1).unwrap());
        assert_eq!(second.destination, grid.zone_at(2, 2).unwrap());
        assert_eq!(second.delay_tolerance, 4.0);
        assert_eq!(second.prefs.compromise, 2.5);
    }

    #[test]
    fn status_moves_forward_only() {
        let mut r = Request::new(RequestId(1), 0.0, 0, 1, 1, &defaults());
        r.transition(RequestStatus::Matched).unwrap();
        assert!(r.transition(RequestStatus::Waiting).is_err());
        r.transition(RequestStatus::Onboard).unwrap();
        assert!(r.transition(RequestStatus::Rejected(RejectReason::Customer)).is_err());
        r.transition(RequestStatus::Completed).unwrap();
        assert!(r.transition(RequestStatus::Completed).is_err());
    }

    #[test]
    fn synthetic_zero_rates_empty() {
        let grid = Grid::new(3, 3, 1.0).unwrap();
        let profile = RateProfile::stationary(vec![0.0; 9]).unwrap();
        let out = generate_synthetic(1, &profile, 500, &grid, &SyntheticSpec::default(), &defaults()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn synthetic_negative_rate_is_config_error() {
        let mut rates = vec![0.0; 9];
        rates[3] = -1.0;
        assert!(matches!(RateProfile::stationary(rates), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_deterministic_per_seed() {
        let grid = Grid::new(4, 4, 1.0).unwrap();
        let profile = RateProfile::stationary(vec![0.3; 16]).unwrap();
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(9, &profile, 200, &grid, &spec, &defaults()).unwrap();
        let b = generate_synthetic(9, &profile, 200, &grid, &spec, &defaults()).unwrap();
        let c = generate_synthetic(10, &profile, 200, &grid, &spec, &defaults()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|r| r.origin != r.destination && (1..=3).contains(&r.passengers)));
    }

    #[test]
    fn synthetic_poisson_mean() {
        // Poisson(2/min) over 1000 min: mean 2000, standard error sqrt(2000).
        let grid = Grid::new(3, 3, 1.0).unwrap();
        let mut rates = vec![0.0; 9];
        rates[4] = 2.0;
        let profile = RateProfile::stationary(rates).unwrap();
        let out = generate_synthetic(42, &profile, 1000, &grid, &SyntheticSpec::default(), &defaults()).unwrap();
        let n = out.len() as f64;
        assert!((n - 2000.0).abs() <= 3.0 * 2000f64.sqrt(), "count {n}");
        assert!(out.iter().all(|r| r.origin == 4));
    }

    #[test]
    fn forecast_bin_mean_over_prior_days() {
        let mut h = DemandHistory::new(2, 30).unwrap();
        // Zone 1 sees 4 requests in the 08:00 bin on day 0 and 6 on day 1.
        for _ in 0..4 {
            h.record(480.0 + 5.0, 1);
        }
        for _ in 0..6 {
            h.record(1440.0 + 480.0 + 7.0, 1);
        }
        assert_eq!(h.bin_mean(1, 16, 2), 5.0);
        let f: DemandForecast<f64> = h.predict(2.0 * 1440.0 + 480.0, 3, 1.0);
        assert!(!f.cold_start);
        assert_eq!(f.series.get(0, 1), 5.0 / 30.0);
        assert_eq!(f.series.get(0, 0), 0.0);

        // With one-minute bins the per-step forecast is the bin mean itself.
        let mut h = DemandHistory::new(1, 1).unwrap();
        (0..4).for_each(|_| h.record(100.0, 0));
        (0..6).for_each(|_| h.record(1540.0, 0));
        let f: DemandForecast<f64> = h.predict(2880.0 + 100.0, 0, 1.0);
        assert_eq!(f.series.get(0, 0), 5.0);
    }

    #[test]
    fn forecast_cold_start_zero() {
        let h = DemandHistory::new(4, 30).unwrap();
        let f: DemandForecast<f64> = h.predict(100.0, 30, 1.0);
        assert!(f.cold_start);
        assert_eq!(f.series.steps(), 31);
        assert!((0..31).all(|s| f.series.step_total(s) == 0.0));
    }

    #[test]
    fn forecast_constant_history_constant_forecast() {
        // Exactly c = 2 requests per minute in zone 0 for three days.
        let mut h = DemandHistory::new(1, 30).unwrap();
        for m in 0..3 * 1440 {
            h.record(m as f64, 0);
            h.record(m as f64 + 0.5, 0);
        }
        let f: DemandForecast<f64> = h.predict(3.0 * 1440.0 + 17.0, 30, 1.0);
        for s in 0..=30 {
            assert_eq!(f.series.get(s, 0), 2.0);
        }
    }

    #[test]
    fn forecast_converges_to_stationary_rate() {
        let grid = Grid::new(3, 3, 1.0).unwrap();
        let rates: Vec<f64> = (0..9).map(|z| 1.0 + 0.25 * z as f64).collect();
        let profile = RateProfile::stationary(rates.clone()).unwrap();
        let days = 20;
        let reqs = generate_synthetic(5, &profile, days * 1440, &grid, &SyntheticSpec::default(), &defaults()).unwrap();
        let mut h = DemandHistory::new(9, 30).unwrap();
        for r in &reqs {
            h.record(r.request_time, r.origin);
        }
        let f: DemandForecast<f64> = h.predict((days * 1440) as f64, 30, 1.0);
        for z in 0..9 {
            let mean = (0..=30).map(|s| f.series.get(s, z)).sum::<f64>() / 31.0;
            assert!((mean - rates[z]).abs() <= 0.10 * rates[z], "zone {z}: {mean} vs {}", rates[z]);
        }
    }

    #[test]
    fn supply_examples() {
        let idle = SupplyEntry { zone: 3, busy_until: None, exits_in: None };
        let f = project_supply(&[idle], 5, 2, 1.0);
        assert!((0..=2).all(|s| f.series.get(s, 3) == 1.0));

        let busy = SupplyEntry { zone: 0, busy_until: Some((4, 2.5)), exits_in: None };
        let f = project_supply(&[busy], 5, 5, 1.0);
        for s in 0..=5 {
            assert_eq!(f.series.get(s, 4), if s >= 3 { 1.0 } else { 0.0 }, "step {s}");
        }

        let f = project_supply::<f64>(&[], 5, 4, 1.0);
        assert!((0..=4).all(|s| f.series.step_total(s) == 0.0));
    }

    #[test]
    fn supply_respects_exits_and_skips_corrupt() {
        let leaving = SupplyEntry { zone: 1, busy_until: None, exits_in: Some(2.0) };
        let corrupt = SupplyEntry { zone: 1, busy_until: Some((1, f64::NAN)), exits_in: None };
        let f = project_supply(&[leaving, corrupt], 3, 4, 1.0);
        let totals: Vec<f64> = (0..=4).map(|s| f.series.step_total(s)).collect();
        assert_eq!(totals, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
