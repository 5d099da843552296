//! Commands behind the `ridepool` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ridepool::dispatch::checkpoint;
use ridepool::dispatch::qfunction::QFunction;
use ridepool::engine::{summarize, MetricsLog, PolicyMode, Report, SimConfig, Simulation, Toggles};

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const QMAX_FILE: &str = "qmax.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const COMPARE_FILE: &str = "compare.csv";
pub const COMPARE_TABLE_FILE: &str = "compare.txt";

/// Loads the config (defaults when no path), then applies the seed and
/// toggle overrides and validates the result.
pub fn resolve_config(path: Option<&Path>, seed: Option<u64>, toggles: &[String]) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => SimConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut t = cfg.toggles();
    for spec in toggles {
        t.apply(spec)?;
    }
    cfg.set_toggles(t);
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `dir` and checks that files can be written into it.
pub fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<QFunction<f64>> {
    checkpoint::load_file(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write_summary(log: &MetricsLog, out: &Path) -> Result<Option<Report>> {
    let report = summarize(log);
    let text = report.as_ref().map_or_else(|| "empty log\n".to_string(), |r| format!("{r}\n"));
    fs::write(out.join(SUMMARY_FILE), text)?;
    Ok(report)
}

/// Runs one simulation and writes the metrics CSVs, the summary and the
/// resolved config under `out`.
pub fn simulate(cfg: &SimConfig, policy: Option<QFunction<f64>>, trace: bool, out: &Path) -> Result<Option<Report>> {
    prepare_out(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let mut sim = Simulation::new(cfg.clone(), policy)?;
    sim.set_trace(trace);
    log::info!("demand fingerprint {:016x} for seed {}", sim.fingerprint(), cfg.seed);
    let result = sim.run()?;
    result.log.write_dir(out)?;
    write_summary(&result.log, out)
}

/// Runs a trained policy greedily with learning off.
pub fn evaluate(cfg: &SimConfig, policy: QFunction<f64>, trace: bool, out: &Path) -> Result<Option<Report>> {
    let cfg = SimConfig { learn: false, policy_mode: PolicyMode::Greedy, ..cfg.clone() };
    simulate(&cfg, Some(policy), trace, out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QmaxRow {
    pub episode: usize,
    pub tick: u64,
    pub decisions: u64,
    pub updates: u64,
    pub epsilon: f64,
    pub mean_qmax: f64,
    pub loss: f64,
}

/// Trains over `episodes` runs with seeds `seed, seed + 1, ...`, starting
/// from `init` when given. Writes the final checkpoint, periodic ones
/// under `checkpoints/` and the Q-max curve.
pub fn train(cfg: &SimConfig, init: Option<QFunction<f64>>, episodes: usize, out: &Path) -> Result<QFunction<f64>> {
    prepare_out(out)?;
    let periodic = out.join("checkpoints");
    if cfg.checkpoint_every > 0 {
        prepare_out(&periodic)?;
    }
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let mut curve = csv::Writer::from_path(out.join(QMAX_FILE))?;
    let mut policy = init;
    let mut ticks = 0usize;
    for episode in 0..episodes {
        let ep =
            SimConfig { seed: cfg.seed + episode as u64, learn: true, policy_mode: PolicyMode::Explore, ..cfg.clone() };
        let mut sim = Simulation::new(ep, policy.take())?;
        for _ in 0..cfg.steps {
            sim.step()?;
            ticks += 1;
            let row = sim.log().ticks.last().expect("a row per step");
            let q = sim.policy();
            if row.loss > 0.0 || row.mean_qmax != 0.0 {
                curve.serialize(QmaxRow {
                    episode,
                    tick: row.tick,
                    decisions: q.steps(),
                    updates: q.updates(),
                    epsilon: q.epsilon(),
                    mean_qmax: row.mean_qmax,
                    loss: row.loss,
                })?;
            }
            if cfg.checkpoint_every > 0 && ticks.is_multiple_of(cfg.checkpoint_every) {
                checkpoint::save_file(q, &periodic.join(format!("step-{ticks:07}.txt")))?;
            }
        }
        let q = sim.policy();
        log::info!("episode {episode}: {} decisions, {} updates, epsilon {:.3}", q.steps(), q.updates(), q.epsilon());
        policy = Some(sim.run()?.policy);
    }
    curve.flush()?;
    let policy = match policy {
        Some(p) => p,
        None => QFunction::new(cfg.q_config()?)?,
    };
    checkpoint::save_file(&policy, &out.join(CHECKPOINT_FILE))?;
    Ok(policy)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub config: String,
    pub seed: u64,
    pub fingerprint: String,
    pub total_requests: u64,
    pub served: u64,
    pub accept_rate: f64,
    pub rejected_radius: u64,
    pub rejected_customer: u64,
    pub expired: u64,
    pub mean_wait_s: f64,
    pub mean_occupied: f64,
    pub peak_occupied: u64,
    pub profit_per_hour: f64,
    pub km_per_hour: f64,
    pub idle_hours_per_vehicle: f64,
    pub mean_occupancy: f64,
}

impl CompareRow {
    fn new(t: Toggles, seed: u64, fingerprint: u64, r: &Report) -> Self {
        Self {
            config: t.label(),
            seed,
            fingerprint: format!("{fingerprint:016x}"),
            total_requests: r.total_requests,
            served: r.served,
            accept_rate: r.accept_rate,
            rejected_radius: r.rejected_radius,
            rejected_customer: r.rejected_customer,
            expired: r.expired,
            mean_wait_s: r.mean_wait_s,
            mean_occupied: r.mean_occupied_vehicles,
            peak_occupied: r.peak_occupied_vehicles,
            profit_per_hour: r.profit_per_hour,
            km_per_hour: r.km_per_hour,
            idle_hours_per_vehicle: r.idle_hours_per_vehicle,
            mean_occupancy: r.mean_occupancy,
        }
    }
}

/// Runs the six configurations in [`Toggles::matrix`] order on every seed.
/// Rows that dispatch or price need a policy; without one nothing runs.
pub fn compare(cfg: &SimConfig, policy: Option<&QFunction<f64>>, seeds: &[u64], out: &Path) -> Result<Vec<CompareRow>> {
    let matrix = Toggles::matrix();
    if policy.is_none() {
        if let Some(t) = matrix.iter().find(|t| t.dispatch || t.pricing) {
            bail!("configuration {} needs a trained checkpoint; pass --checkpoint", t.label());
        }
    }
    if seeds.is_empty() {
        bail!("compare needs at least one seed");
    }
    prepare_out(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut fingerprint = None;
        for t in matrix {
            let mut run_cfg = SimConfig { seed, learn: false, policy_mode: PolicyMode::Greedy, ..cfg.clone() };
            run_cfg.set_toggles(t);
            let sim = Simulation::new(run_cfg, policy.cloned())?;
            let fp = sim.fingerprint();
            match fingerprint {
                None => {
                    log::info!("seed {seed}: demand fingerprint {fp:016x}");
                    fingerprint = Some(fp);
                }
                Some(f) if f != fp => bail!("seed {seed}: {} saw demand {fp:016x}, expected {f:016x}", t.label()),
                Some(_) => {}
            }
            let result = sim.run()?;
            let report = summarize(&result.log).context("compare needs at least one step")?;
            log::info!("seed {seed} {}: accept rate {:.4}", t.label(), report.accept_rate);
            rows.push(CompareRow::new(t, seed, fp, &report));
        }
    }
    let mut w = csv::Writer::from_path(out.join(COMPARE_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    fs::write(out.join(COMPARE_TABLE_FILE), render_table(&rows))?;
    Ok(rows)
}

/// Per-configuration means over seeds, in matrix order.
pub fn render_table(rows: &[CompareRow]) -> String {
    let mut s = format!(
        "{:<22} {:>6} {:>9} {:>9} {:>10} {:>10} {:>10} {:>10}\n",
        "config", "seeds", "accept", "served", "wait_s", "occupied", "profit/h", "km/h"
    );
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.config.as_str()) {
            labels.push(&r.config);
        }
    }
    for label in labels {
        let group: Vec<&CompareRow> = rows.iter().filter(|r| r.config == label).collect();
        let n = group.len() as f64;
        let mean = |f: fn(&CompareRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        s += &format!(
            "{:<22} {:>6} {:>9.4} {:>9.1} {:>10.1} {:>10.2} {:>10.3} {:>10.3}\n",
            label,
            group.len(),
            mean(|r| r.accept_rate),
            mean(|r| r.served as f64),
            mean(|r| r.mean_wait_s),
            mean(|r| r.mean_occupied),
            mean(|r| r.profit_per_hour),
            mean(|r| r.km_per_hour),
        );
    }
    s
}

/// Re-renders the summary of a metrics directory written by `simulate`.
pub fn report(from: &Path, out: Option<&Path>) -> Result<String> {
    let log = MetricsLog::read_dir(from).with_context(|| format!("reading metrics from {}", from.display()))?;
    let text = summarize(&log).map_or_else(|| "empty log\n".to_string(), |r| format!("{r}\n"));
    if let Some(dir) = out {
        prepare_out(dir)?;
        fs::write(dir.join(SUMMARY_FILE), &text)?;
    }
    Ok(text)
}

/// Default output directory.
pub fn default_out() -> PathBuf {
    PathBuf::from("out")
}
