use std::fs;

use ridepool::dispatch::checkpoint;
use ridepool::engine::{summarize, DemandSource, MetricsLog, PolicyMode};
use ridepool::{QNetwork, SimConfig, Simulation};

fn small() -> SimConfig {
    SimConfig {
        rows: 8,
        cols: 8,
        cell_km: 1.0,
        steps: 180,
        vehicles: 25,
        entry_window_minutes: 30.0,
        demand: DemandSource::Stationary,
        demand_per_minute: 1.5,
        demand_hotspots: vec![],
        crop: 15,
        hidden: 4,
        ..SimConfig::default()
    }
}

#[test]
fn every_request_ends_up_in_exactly_one_bucket() {
    for (dispatch, ridesharing, pricing) in [(false, false, false), (false, true, false), (true, true, true)] {
        let cfg = SimConfig { dispatch, ridesharing, pricing, ..small() };
        let out = ridepool::run(cfg, None).unwrap();
        let last = out.log.ticks.last().unwrap();
        assert!(last.total_requests > 100);
        let accounted = last.served + last.rejected_radius + last.rejected_customer + last.expired + last.waiting;
        assert_eq!(accounted, last.total_requests, "dispatch={dispatch} rs={ridesharing} ps={pricing}");
        assert_eq!(out.log.riders.len() as u64, last.total_requests);
        let committed =
            out.log.riders.iter().filter(|r| matches!(r.status.as_str(), "matched" | "onboard" | "completed")).count()
                as u64;
        assert_eq!(committed, last.served);
        let new: u64 = out.log.ticks.iter().map(|t| t.new_requests).sum();
        assert_eq!(new, last.total_requests);
    }
}

#[test]
fn occupancy_never_exceeds_active_fleet() {
    let out = ridepool::run(small(), None).unwrap();
    for t in &out.log.ticks {
        assert!(t.occupied_vehicles <= t.active_vehicles);
        assert!(t.idle_vehicles + t.occupied_vehicles <= t.active_vehicles);
        assert!(t.active_vehicles <= 25);
    }
    let r = summarize(&out.log).unwrap();
    assert!(r.accept_rate > 0.0 && r.accept_rate <= 1.0);
    assert!(r.peak_occupied_vehicles as f64 >= r.mean_occupied_vehicles);
}

#[test]
fn learning_run_checkpoint_round_trips_through_a_file() {
    let cfg = SimConfig { learn: true, policy_mode: PolicyMode::Explore, pricing: false, steps: 120, ..small() };
    let out = ridepool::run(cfg.clone(), None).unwrap();
    let q = out.policy;
    assert!(q.steps() > 0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.txt");
    checkpoint::save_file(&q, &path).unwrap();
    let back: QNetwork = checkpoint::load_file(&path).unwrap();
    assert_eq!(back.steps(), q.steps());
    assert_eq!(back.updates(), q.updates());
    assert_eq!(back.online().params(), q.online().params());
    assert_eq!(back.target().params(), q.target().params());

    // Greedy evaluation with either copy gives the same run.
    let eval = SimConfig { learn: false, policy_mode: PolicyMode::Greedy, ..cfg };
    let a = ridepool::run(eval.clone(), Some(q)).unwrap();
    let b = ridepool::run(eval, Some(back)).unwrap();
    assert_eq!(a.log, b.log);
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let q = QNetwork::new(small().q_config().unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.txt");
    checkpoint::save_file(&q, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let cut: String = text.lines().filter(|l| !l.starts_with("target")).map(|l| format!("{l}\n")).collect();
    fs::write(&path, cut).unwrap();
    assert!(checkpoint::load_file::<f64>(&path).is_err());
}

#[test]
fn config_file_with_sections_loads_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("city.toml");
    fs::write(
        &path,
        "seed = 9\n[sim]\nrows = 6\ncols = 7\n[fleet]\nvehicles = 4\n[demand]\ndemand_hotspots = []\n[toggles]\npricing = false\n[learning]\nhidden = 3\n",
    )
    .unwrap();
    let cfg = SimConfig::load(&path).unwrap();
    assert_eq!((cfg.seed, cfg.rows, cfg.cols, cfg.vehicles, cfg.hidden), (9, 6, 7, 4, 3));
    assert!(!cfg.pricing);
    assert_eq!(cfg.delay_tolerance, SimConfig::default().delay_tolerance);
    assert_eq!(SimConfig::parse(&cfg.to_text()).unwrap(), cfg);
}

#[test]
fn config_errors_are_reported() {
    for bad in [
        "rows = 0\n",
        "[sim]\nspeed = 3\n",
        "[nowhere]\nrows = 3\n",
        "vehicles = \"many\"\n",
        "rows = 4\n[sim]\nrows = 5\n",
    ] {
        assert!(SimConfig::parse(bad).is_err(), "{bad:?} parsed");
    }
}

#[test]
fn trip_file_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("trips.csv"),
        "id,request_time,passengers,origin_row,origin_col,dest_row,dest_col\n1,2024-03-01T00:01:00,1,0,0,1,2\n2,2024-03-01T00:03:00,2,1,0,0,1\n",
    )
    .unwrap();
    let path = dir.path().join("c.toml");
    fs::write(
        &path,
        "[sim]\nrows = 3\ncols = 3\ncell_km = 1.0\nsteps = 40\n[fleet]\nvehicles = 3\nentry_window_minutes = 0\n[demand]\ndemand = \"trips\"\ndemand_hotspots = []\ntrips_path = \"trips.csv\"\n[toggles]\ndispatch = false\npricing = false\n",
    )
    .unwrap();
    let cfg = SimConfig::load(&path).unwrap();
    let sim = Simulation::new(cfg, None).unwrap();
    assert_eq!(sim.requests().len(), 2);
    let out = sim.run().unwrap();
    let last = out.log.ticks.last().unwrap();
    assert_eq!(last.total_requests, 2);
    assert_eq!(last.served, 2);

    let out_dir = dir.path().join("out");
    out.log.write_dir(&out_dir).unwrap();
    assert_eq!(MetricsLog::read_dir(&out_dir).unwrap().ticks, out.log.ticks);
}
