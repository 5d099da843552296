//! Per-tick metrics, per-vehicle and per-rider records, and the summary
//! report built from them.

use std::fmt;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::Result;

/// One row per tick. Counters named `*_total` and the request counters are
/// cumulative; the rest describe the tick itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub minute: f64,
    pub new_requests: u64,
    pub total_requests: u64,
    /// Requests accepted by a vehicle and its customer.
    pub served: u64,
    pub rejected_radius: u64,
    pub rejected_customer: u64,
    pub expired: u64,
    /// Requests still queued for a later tick.
    pub waiting: u64,
    pub accept_rate: f64,
    pub pickups: u64,
    /// Mean wait of this tick's pickups, seconds.
    pub mean_wait_s: f64,
    pub active_vehicles: u64,
    /// Vehicles with a non-empty route.
    pub occupied_vehicles: u64,
    pub dispatching_vehicles: u64,
    pub idle_vehicles: u64,
    pub onboard_riders: u64,
    pub profit_total: f64,
    pub km_total: f64,
    /// This tick's fleet profit per active vehicle-hour.
    pub profit_per_hour: f64,
    /// This tick's km per active vehicle-hour.
    pub km_per_hour: f64,
    /// Fleet supply-demand mismatch: forecast requests minus available vehicles.
    pub mismatch: f64,
    pub decisions: u64,
    pub mean_qmax: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleRow {
    pub id: u32,
    pub type_rank: u32,
    pub capacity: u32,
    pub entered_at: f64,
    /// Minute the vehicle left, or the end of the run.
    pub left_at: f64,
    pub duty_hours: f64,
    pub occupied_hours: f64,
    pub idle_hours: f64,
    pub earnings: f64,
    pub fuel_cost: f64,
    pub profit: f64,
    pub distance_km: f64,
    pub riders: u64,
}

impl VehicleRow {
    pub fn profit_per_hour(&self) -> f64 {
        if self.duty_hours > 0.0 {
            self.profit / self.duty_hours
        } else {
            0.0
        }
    }

    pub fn occupancy(&self) -> f64 {
        if self.duty_hours > 0.0 {
            self.occupied_hours / self.duty_hours
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RiderRow {
    pub id: u64,
    pub request_time: f64,
    pub origin: usize,
    pub destination: usize,
    pub passengers: u32,
    /// `waiting`, `matched`, `onboard`, `completed` or `rejected-<reason>`.
    pub status: String,
    pub vehicle: Option<u32>,
    pub price: Option<f64>,
    pub wait_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuoteRow {
    pub tick: u64,
    pub vehicle: u32,
    pub request: u64,
    pub initial_price: f64,
    pub price: f64,
    pub marginal_km: f64,
    pub sharing: u32,
    pub wait_minutes: f64,
    pub utility: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub tick: u64,
    pub vehicle: u32,
    pub from: usize,
    pub target: usize,
    pub action: usize,
    /// The vehicle had just entered the market.
    pub entering: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub ticks: Vec<TickRow>,
    pub vehicles: Vec<VehicleRow>,
    pub riders: Vec<RiderRow>,
    pub quotes: Vec<QuoteRow>,
    pub decisions: Vec<DecisionRow>,
}

pub const TICKS_FILE: &str = "metrics.csv";
pub const VEHICLES_FILE: &str = "vehicles.csv";
pub const RIDERS_FILE: &str = "riders.csv";
pub const QUOTES_FILE: &str = "quotes.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

impl MetricsLog {
    pub fn write_ticks<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.ticks {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV files into `dir`. The quote and decision traces are
    /// skipped when empty.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join(TICKS_FILE), &self.ticks)?;
        write_rows(&dir.join(VEHICLES_FILE), &self.vehicles)?;
        write_rows(&dir.join(RIDERS_FILE), &self.riders)?;
        if !self.quotes.is_empty() {
            write_rows(&dir.join(QUOTES_FILE), &self.quotes)?;
        }
        if !self.decisions.is_empty() {
            write_rows(&dir.join(DECISIONS_FILE), &self.decisions)?;
        }
        Ok(())
    }

    /// Reads what [`MetricsLog::write_dir`] wrote. Missing optional files
    /// read as empty.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let optional = |name: &str| dir.join(name).exists();
        Ok(Self {
            ticks: read_rows(&dir.join(TICKS_FILE))?,
            vehicles: if optional(VEHICLES_FILE) { read_rows(&dir.join(VEHICLES_FILE))? } else { Vec::new() },
            riders: if optional(RIDERS_FILE) { read_rows(&dir.join(RIDERS_FILE))? } else { Vec::new() },
            quotes: if optional(QUOTES_FILE) { read_rows(&dir.join(QUOTES_FILE))? } else { Vec::new() },
            decisions: if optional(DECISIONS_FILE) { read_rows(&dir.join(DECISIONS_FILE))? } else { Vec::new() },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`; values outside land in the
    /// end bins.
    pub fn new(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let i = ((v - lo) / width).floor();
            let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(bins - 1) };
            counts[i] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub ticks: usize,
    pub hours: f64,
    pub total_requests: u64,
    pub served: u64,
    pub rejected_radius: u64,
    pub rejected_customer: u64,
    pub expired: u64,
    pub accept_rate: f64,
    pub mean_wait_s: f64,
    pub mean_occupied_vehicles: f64,
    pub peak_occupied_vehicles: u64,
    pub vehicles: usize,
    /// Mean over vehicles of profit per duty hour.
    pub profit_per_hour: f64,
    pub km_per_hour: f64,
    pub idle_hours_per_vehicle: f64,
    pub mean_occupancy: f64,
    pub total_profit: f64,
    pub total_km: f64,
    /// Share of duty time occupied, ten bins over [0, 1].
    pub occupancy_histogram: Histogram,
    /// Pickup waits in one-minute bins up to 30 minutes.
    pub wait_histogram: Histogram,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Aggregates a log. An empty log yields `None` and a warning.
pub fn summarize(log: &MetricsLog) -> Option<Report> {
    let Some(last) = log.ticks.last() else {
        log::warn!("metrics log is empty; nothing to summarize");
        return None;
    };
    let dt = log.ticks.get(1).map_or(1.0, |t| t.minute - log.ticks[0].minute);
    let waits: Vec<f64> = log.riders.iter().filter_map(|r| r.wait_s).collect();
    let duty: f64 = log.vehicles.iter().map(|v| v.duty_hours).sum();
    let km: f64 = log.vehicles.iter().map(|v| v.distance_km).sum();
    let profit: f64 = log.vehicles.iter().map(|v| v.profit).sum();
    Some(Report {
        ticks: log.ticks.len(),
        hours: log.ticks.len() as f64 * dt / 60.0,
        total_requests: last.total_requests,
        served: last.served,
        rejected_radius: last.rejected_radius,
        rejected_customer: last.rejected_customer,
        expired: last.expired,
        accept_rate: last.accept_rate,
        mean_wait_s: mean(waits.iter().copied()),
        mean_occupied_vehicles: mean(log.ticks.iter().map(|t| t.occupied_vehicles as f64)),
        peak_occupied_vehicles: log.ticks.iter().map(|t| t.occupied_vehicles).max().unwrap_or(0),
        vehicles: log.vehicles.len(),
        profit_per_hour: mean(log.vehicles.iter().filter(|v| v.duty_hours > 0.0).map(VehicleRow::profit_per_hour)),
        km_per_hour: if duty > 0.0 { km / duty } else { 0.0 },
        idle_hours_per_vehicle: mean(log.vehicles.iter().map(|v| v.idle_hours)),
        mean_occupancy: mean(log.vehicles.iter().filter(|v| v.duty_hours > 0.0).map(VehicleRow::occupancy)),
        total_profit: profit,
        total_km: km,
        occupancy_histogram: Histogram::new(
            log.vehicles.iter().filter(|v| v.duty_hours > 0.0).map(VehicleRow::occupancy),
            0.0,
            1.0,
            10,
        ),
        wait_histogram: Histogram::new(waits.iter().copied(), 0.0, 1800.0, 30),
    })
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ticks                 {}", self.ticks)?;
        writeln!(f, "hours                 {:.2}", self.hours)?;
        writeln!(f, "requests              {}", self.total_requests)?;
        writeln!(f, "served                {}", self.served)?;
        writeln!(f, "rejected_radius       {}", self.rejected_radius)?;
        writeln!(f, "rejected_customer     {}", self.rejected_customer)?;
        writeln!(f, "expired               {}", self.expired)?;
        writeln!(f, "accept_rate           {:.4}", self.accept_rate)?;
        writeln!(f, "mean_wait_s           {:.1}", self.mean_wait_s)?;
        writeln!(f, "mean_occupied         {:.2}", self.mean_occupied_vehicles)?;
        writeln!(f, "peak_occupied         {}", self.peak_occupied_vehicles)?;
        writeln!(f, "vehicles              {}", self.vehicles)?;
        writeln!(f, "profit_per_hour       {:.3}", self.profit_per_hour)?;
        writeln!(f, "km_per_hour           {:.3}", self.km_per_hour)?;
        writeln!(f, "idle_hours_per_veh    {:.3}", self.idle_hours_per_vehicle)?;
        writeln!(f, "mean_occupancy        {:.4}", self.mean_occupancy)?;
        writeln!(f, "total_profit          {:.2}", self.total_profit)?;
        writeln!(f, "total_km              {:.2}", self.total_km)?;
        write!(f, "occupancy_histogram  ")?;
        for (i, c) in self.occupancy_histogram.counts.iter().enumerate() {
            write!(
                f,
                " {:.0}-{:.0}%:{c}",
                self.occupancy_histogram.edges[i] * 100.0,
                self.occupancy_histogram.edges[i + 1] * 100.0
            )?;
        }
        writeln!(f)?;
        write!(f, "wait_histogram_min   ")?;
        for (i, c) in self.wait_histogram.counts.iter().enumerate() {
            if *c > 0 {
                write!(f, " {}:{c}", i)?;
            }
        }
        writeln!(f)
    }
}
