//! Simulation settings and their text format.
//!
//! The file is TOML. Keys may sit at the top level or inside any of the
//! sections `sim`, `fleet`, `demand`, `toggles`, `matching`, `pricing`,
//! `reward` and `learning`; every key name is unique across sections.
//! Unspecified keys keep their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demand::{Preferences, TripDefaults};
use crate::dispatch::{Linear, Profile, QConfig, RewardWeights};
use crate::error::{Error, Result};
use crate::pricing::VehicleTypeProfile;

pub const SECTIONS: [&str; 8] = ["sim", "fleet", "demand", "toggles", "matching", "pricing", "reward", "learning"];

/// Feature switches that define the compared configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Toggles {
    pub dispatch: bool,
    pub ridesharing: bool,
    pub pricing: bool,
    pub darm: bool,
}

impl Toggles {
    pub const FULL: Toggles = Toggles { dispatch: true, ridesharing: true, pricing: true, darm: true };

    /// The five baselines followed by the full method.
    pub fn matrix() -> [Toggles; 6] {
        let t = |dispatch, ridesharing, pricing, darm| Toggles { dispatch, ridesharing, pricing, darm };
        [
            t(false, false, false, false),
            t(false, true, false, false),
            t(true, false, false, false),
            t(true, true, false, false),
            t(true, true, true, false),
            Self::FULL,
        ]
    }

    pub fn label(&self) -> String {
        if *self == Self::FULL {
            return "DARM+DPRS".into();
        }
        let f = |on: bool, s: &str| if on { s.to_string() } else { format!("!{s}") };
        format!(
            "({}, {}, {}, {})",
            f(self.dispatch, "D"),
            f(self.ridesharing, "RS"),
            f(self.pricing, "PS"),
            if self.darm { "DARM" } else { "GM" }
        )
    }

    /// Applies `name=on|off` with `name` one of dispatch, ridesharing,
    /// pricing, darm.
    pub fn apply(&mut self, spec: &str) -> Result<()> {
        let (name, value) =
            spec.split_once('=').ok_or_else(|| Error::Config(format!("toggle {spec:?} is not name=on|off")))?;
        let on = match value.trim() {
            "on" | "true" | "1" => true,
            "off" | "false" | "0" => false,
            v => return Err(Error::Config(format!("toggle value {v:?} must be on or off"))),
        };
        match name.trim() {
            "dispatch" | "d" => self.dispatch = on,
            "ridesharing" | "rs" => self.ridesharing = on,
            "pricing" | "ps" => self.pricing = on,
            "darm" => self.darm = on,
            n => {
                return Err(Error::Config(format!(
                    "unknown toggle {n:?}; expected dispatch, ridesharing, pricing or darm"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandSource {
    /// Two daily peaks over Gaussian bumps around `demand_hotspots`.
    City,
    /// Constant rates split evenly over `demand_hotspots` (all zones if empty).
    Stationary,
    /// Trip records from `trips_path`.
    Trips,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Greedy,
    Explore,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    // sim
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub cell_km: f64,
    /// Minutes per tick.
    pub delta_t: f64,
    pub steps: usize,
    pub speed_kmh: f64,
    /// No dispatching before this minute.
    pub warmup_minutes: f64,

    // fleet
    pub vehicles: usize,
    /// Vehicles enter uniformly over this many minutes.
    pub entry_window_minutes: f64,
    pub duty_hours: f64,
    pub type_rank: Vec<u32>,
    pub type_capacity: Vec<u32>,
    pub type_mileage: Vec<f64>,
    pub type_per_km: Vec<f64>,
    pub type_per_wait_minute: Vec<f64>,
    pub type_base_fare: Vec<f64>,
    /// Relative share of each type in the fleet.
    pub type_weights: Vec<f64>,

    // demand
    pub demand: DemandSource,
    pub trips_path: Option<PathBuf>,
    /// Fleet-wide mean requests per minute.
    pub demand_per_minute: f64,
    /// `[row, col]` cells.
    pub demand_hotspots: Vec<[usize; 2]>,
    pub max_trip_cells: Option<usize>,
    pub passenger_weights: Vec<f64>,
    pub forecast_bin_minutes: usize,

    // toggles
    pub dispatch: bool,
    pub ridesharing: bool,
    pub pricing: bool,
    pub darm: bool,

    // matching
    pub radius_km: f64,
    /// Longest a customer waits for pickup, minutes.
    pub delay_tolerance: f64,
    /// Declined offers after which a request is dropped.
    pub max_requeues: u32,

    // pricing
    pub gas_price: f64,
    pub lambda: f64,
    pub omega4: f64,
    pub omega5: f64,
    pub omega6: f64,
    /// Customer compromise. Surcharged quotes to low-ranked destinations run
    /// into the thousands, so this is large.
    pub delta: f64,
    /// Ticks between hotspot list refreshes.
    pub hotspot_refresh: usize,

    // reward
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta5: f64,

    // learning
    pub idle_threshold: f64,
    pub profile: String,
    pub crop: usize,
    /// Channels (compact) or units (dense) in the hidden layer.
    pub hidden: usize,
    pub eta: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_span: u64,
    pub learning_rate_start: f64,
    pub learning_rate_end: f64,
    pub learning_rate_span: u64,
    pub sync_every: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub reward_scale: f64,
    pub td_clip: Option<f64>,
    pub learn: bool,
    pub policy_mode: PolicyMode,
    pub train_every: usize,
    pub train_steps: usize,
    /// Ticks between checkpoints while training; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let types = VehicleTypeProfile::<f64>::default_table();
        Self {
            seed: 1,
            rows: 20,
            cols: 20,
            cell_km: 0.8,
            delta_t: 1.0,
            steps: 1440,
            speed_kmh: 20.0,
            warmup_minutes: 20.0,

            vehicles: 200,
            entry_window_minutes: 240.0,
            duty_hours: 21.0,
            type_rank: types.iter().map(|t| t.rank).collect(),
            type_capacity: types.iter().map(|t| t.capacity).collect(),
            type_mileage: types.iter().map(|t| t.mileage).collect(),
            type_per_km: types.iter().map(|t| t.per_km).collect(),
            type_per_wait_minute: types.iter().map(|t| t.per_wait_minute).collect(),
            type_base_fare: types.iter().map(|t| t.base_fare).collect(),
            type_weights: vec![1.0; types.len()],

            demand: DemandSource::City,
            trips_path: None,
            demand_per_minute: 8.0,
            demand_hotspots: vec![[5, 5], [13, 14], [4, 15]],
            max_trip_cells: Some(16),
            passenger_weights: vec![0.7, 0.2, 0.1],
            forecast_bin_minutes: 30,

            dispatch: true,
            ridesharing: true,
            pricing: true,
            darm: true,

            radius_km: 5.0,
            delay_tolerance: 15.0,
            max_requeues: 3,

            gas_price: crate::pricing::DEFAULT_GAS_PRICE,
            lambda: 0.10,
            omega4: 15.0,
            omega5: 1.0,
            omega6: 4.0,
            delta: 30000.0,
            hotspot_refresh: 5,

            beta1: 10.0,
            beta2: 1.0,
            beta3: 5.0,
            beta4: 12.0,
            beta5: 8.0,

            idle_threshold: 10.0,
            profile: "compact".into(),
            crop: 19,
            hidden: 8,
            eta: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_span: 3000,
            learning_rate_start: 0.1,
            learning_rate_end: 0.001,
            learning_rate_span: 10000,
            sync_every: 150,
            batch_size: 32,
            replay_capacity: 5000,
            reward_scale: 0.001,
            td_clip: None,
            learn: false,
            policy_mode: PolicyMode::Greedy,
            train_every: 1,
            train_steps: 1,
            checkpoint_every: 0,
        }
    }
}

fn range<T: PartialOrd + std::fmt::Display>(key: &str, v: T, ok: bool, valid: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} = {v} is out of range; valid range is {valid}")))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    range(key, v, v > 0.0 && v.is_finite(), "(0, inf)")
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    range(key, v, v >= 0.0 && v.is_finite(), "[0, inf)")
}

impl SimConfig {
    /// Parses the text format. Unknown keys and sections are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut flat = toml::Table::new();
        for (key, value) in table {
            match value {
                toml::Value::Table(section) => {
                    if !SECTIONS.contains(&key.as_str()) {
                        return Err(Error::Config(format!("unknown section [{key}]; expected one of {SECTIONS:?}")));
                    }
                    for (k, v) in section {
                        if flat.insert(k.clone(), v).is_some() {
                            return Err(Error::Config(format!("key {k} given twice")));
                        }
                    }
                }
                other => {
                    if flat.insert(key.clone(), other).is_some() {
                        return Err(Error::Config(format!("key {key} given twice")));
                    }
                }
            }
        }
        let cfg: SimConfig = toml::Value::Table(flat)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(p) = &cfg.trips_path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.trips_path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    /// Renders every key, grouped by section.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn toggles(&self) -> Toggles {
        Toggles { dispatch: self.dispatch, ridesharing: self.ridesharing, pricing: self.pricing, darm: self.darm }
    }

    pub fn set_toggles(&mut self, t: Toggles) {
        self.dispatch = t.dispatch;
        self.ridesharing = t.ridesharing;
        self.pricing = t.pricing;
        self.darm = t.darm;
    }

    pub fn vehicle_types(&self) -> Vec<VehicleTypeProfile<f64>> {
        (0..self.type_rank.len())
            .map(|i| VehicleTypeProfile {
                rank: self.type_rank[i],
                capacity: self.type_capacity[i],
                mileage: self.type_mileage[i],
                per_km: self.type_per_km[i],
                per_wait_minute: self.type_per_wait_minute[i],
                base_fare: self.type_base_fare[i],
            })
            .collect()
    }

    pub fn prefs(&self) -> Preferences<f64> {
        Preferences {
            pooling_weight: self.omega4,
            delay_weight: self.omega5,
            vehicle_type_weight: self.omega6,
            compromise: self.delta,
        }
    }

    pub fn trip_defaults(&self) -> TripDefaults<f64> {
        TripDefaults { delay_tolerance: self.delay_tolerance, prefs: self.prefs() }
    }

    pub fn reward_weights(&self) -> RewardWeights<f64> {
        RewardWeights {
            served: self.beta1,
            dispatch_time: self.beta2,
            extra_delay: self.beta3,
            profit: self.beta4,
            activation: self.beta5,
        }
    }

    pub fn q_profile(&self) -> Result<Profile> {
        match self.profile.as_str() {
            "compact" => Ok(Profile::Compact { crop: self.crop, hidden: self.hidden }),
            "dense" => Ok(Profile::Dense { crop: self.crop, hidden: self.hidden }),
            "deep" => Ok(Profile::Deep),
            p => Err(Error::Config(format!("profile = {p:?}; expected \"compact\", \"dense\" or \"deep\""))),
        }
    }

    pub fn q_config(&self) -> Result<QConfig<f64>> {
        Ok(QConfig {
            profile: self.q_profile()?,
            eta: self.eta,
            epsilon: Linear::new(self.epsilon_start, self.epsilon_end, self.epsilon_span),
            learning_rate: Linear::new(self.learning_rate_start, self.learning_rate_end, self.learning_rate_span),
            sync_every: self.sync_every,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            reward_scale: self.reward_scale,
            td_clip: self.td_clip,
            seed: self.seed,
            grid: (self.rows, self.cols),
        })
    }

    pub fn validate(&self) -> Result<()> {
        range("rows", self.rows, self.rows >= 1, "[1, inf)")?;
        range("cols", self.cols, self.cols >= 1, "[1, inf)")?;
        positive("cell_km", self.cell_km)?;
        positive("delta_t", self.delta_t)?;
        positive("speed_kmh", self.speed_kmh)?;
        non_negative("warmup_minutes", self.warmup_minutes)?;
        non_negative("entry_window_minutes", self.entry_window_minutes)?;
        positive("duty_hours", self.duty_hours)?;
        range("duty_hours", self.duty_hours, self.duty_hours <= 24.0, "(0, 24]")?;

        let n = self.type_rank.len();
        range("type_rank", n, n >= 1, "at least one vehicle type")?;
        for (key, len) in [
            ("type_capacity", self.type_capacity.len()),
            ("type_mileage", self.type_mileage.len()),
            ("type_per_km", self.type_per_km.len()),
            ("type_per_wait_minute", self.type_per_wait_minute.len()),
            ("type_base_fare", self.type_base_fare.len()),
            ("type_weights", self.type_weights.len()),
        ] {
            if len != n {
                return Err(Error::Config(format!("{key} has {len} entries, type_rank has {n}")));
            }
        }
        for t in self.vehicle_types() {
            t.validate().map_err(|e| Error::Config(format!("vehicle type: {e}")))?;
        }
        if self.type_weights.iter().any(|w| !(*w >= 0.0)) || self.type_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("type_weights must be >= 0 with a positive sum".into()));
        }

        non_negative("demand_per_minute", self.demand_per_minute)?;
        for h in &self.demand_hotspots {
            if h[0] >= self.rows || h[1] >= self.cols {
                return Err(Error::Config(format!(
                    "demand_hotspots entry {h:?} is out of range; valid range is rows [0, {}) and cols [0, {})",
                    self.rows, self.cols
                )));
            }
        }
        if self.demand == DemandSource::Trips && self.trips_path.is_none() {
            return Err(Error::Config("demand = \"trips\" needs trips_path".into()));
        }
        if self.passenger_weights.is_empty() || self.passenger_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("passenger_weights must be a non-empty list of weights >= 0".into()));
        }
        let bin = self.forecast_bin_minutes;
        range("forecast_bin_minutes", bin, bin > 0 && 1440 % bin == 0, "divisors of 1440")?;

        positive("radius_km", self.radius_km)?;
        non_negative("delay_tolerance", self.delay_tolerance)?;

        non_negative("gas_price", self.gas_price)?;
        range("lambda", self.lambda, self.lambda > 0.0 && self.lambda <= 1.0, "(0, 1]")?;
        for (k, v) in [("omega4", self.omega4), ("omega5", self.omega5), ("omega6", self.omega6)] {
            non_negative(k, v)?;
        }
        range("delta", self.delta, self.delta.is_finite(), "finite values")?;
        range("hotspot_refresh", self.hotspot_refresh, self.hotspot_refresh >= 1, "[1, inf)")?;
        for (k, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("beta4", self.beta4),
            ("beta5", self.beta5),
        ] {
            non_negative(k, v)?;
        }

        non_negative("idle_threshold", self.idle_threshold)?;
        self.q_profile()?;
        if self.profile == "compact" {
            range("crop", self.crop, self.crop % 2 == 1 && self.crop >= 15, "odd numbers >= 15")?;
            range("hidden", self.hidden, self.hidden >= 1, "[1, inf)")?;
        }
        if self.profile == "dense" {
            range("crop", self.crop, self.crop % 2 == 1, "odd numbers >= 1")?;
            range("hidden", self.hidden, self.hidden >= 1, "[1, inf)")?;
        }
        range("eta", self.eta, self.eta > 0.0 && self.eta < 1.0, "(0, 1)")?;
        for (k, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            range(k, v, (0.0..=1.0).contains(&v), "[0, 1]")?;
        }
        positive("learning_rate_start", self.learning_rate_start)?;
        positive("learning_rate_end", self.learning_rate_end)?;
        for (k, v) in [
            ("epsilon_span", self.epsilon_span),
            ("learning_rate_span", self.learning_rate_span),
            ("sync_every", self.sync_every),
        ] {
            range(k, v, v >= 1, "[1, inf)")?;
        }
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("replay_capacity", self.replay_capacity),
            ("train_every", self.train_every),
        ] {
            range(k, v, v >= 1, "[1, inf)")?;
        }
        positive("reward_scale", self.reward_scale)?;
        if let Some(c) = self.td_clip {
            positive("td_clip", c)?;
        }
        Ok(())
    }
}
