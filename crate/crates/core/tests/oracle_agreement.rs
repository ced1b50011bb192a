//! Trajectory ensembles against the master-equation integrator.

use dtc_sync::lindblad::{integrate_from_top, OracleConfig};
use dtc_sync::ness::accumulate_ness;
use dtc_sync::observables::trajectory_averages;
use dtc_sync::spin::{ModelParams, SpinMagnitude};
use dtc_sync::trajectory::{PropagatorKind, TrajectoryConfig, TrajectoryEngine};

#[test]
fn spin_half_averages_track_master_equation() {
    let s = SpinMagnitude::new(0.5).unwrap();
    let p = ModelParams::new(0.7, 0.9);
    let dt = 1e-3;
    let engine = TrajectoryEngine::new(s, p, dt, PropagatorKind::Auto).unwrap();
    let mut cfg = TrajectoryConfig::new(dt, 5.0, 250, 11);
    cfg.record_entropy = false;
    let records = engine.run_many(&cfg, 0, 4000).unwrap();
    let avg = trajectory_averages(&records).unwrap();
    let oracle = integrate_from_top(&OracleConfig::new(s, dt, 5.0, 250), &p).unwrap();
    assert_eq!(avg.times.len(), oracle.times.len());

    // First-order Trotter bias is O(dt) and far below the statistical error.
    let mut worst: f64 = 0.0;
    for k in 1..avg.times.len() {
        for (m, e, o) in [
            (avg.saz[k], avg.saz_err[k], oracle.saz[k]),
            (avg.sbz[k], avg.sbz_err[k], oracle.sbz[k]),
            (avg.sazsbz[k], avg.sazsbz_err[k], oracle.sazsbz[k]),
        ] {
            worst = worst.max((m - o).abs() / e);
        }
    }
    assert!(worst < 4.0, "max |z| = {worst}");
}

#[test]
fn averaged_snapshots_approach_oracle_state() {
    // Weak drive and coupling: the dynamics relaxes within t = 50.
    let s = SpinMagnitude::new(2.0).unwrap();
    let p = ModelParams::new(0.2, 0.2);
    let dt = 1e-3;
    let t = 50.0;
    let engine = TrajectoryEngine::new(s, p, dt, PropagatorKind::Auto).unwrap();
    let mut cfg = TrajectoryConfig::new(dt, t, 5000, 5);
    cfg.record_entropy = false;
    cfg.snapshot_times = vec![t];
    let records = engine.run_many(&cfg, 0, 2000).unwrap();
    let snaps: Vec<_> = records.iter().flat_map(|r| r.snapshots.iter().cloned()).collect();
    let rho = accumulate_ness(&snaps).unwrap();

    let mut ocfg = OracleConfig::new(s, 1e-2, t, 5000);
    ocfg.positivity_every = 100;
    let oracle = integrate_from_top(&ocfg, &p).unwrap();
    let d = rho.trace_distance(&oracle.final_state).unwrap();
    assert!(d < 0.05, "trace distance {d}");
}
