//! Per-point computations for every sweep mode.

use std::fs;
use std::path::Path;

use dtc_sync::ensemble::{run_ensemble, sync_diagnostics, SyncDiagnostics};
use dtc_sync::lindblad::{integrate_from_top, OracleConfig, OracleRun};
use dtc_sync::lyapunov::{lle_ensemble, LyapunovEstimate};
use dtc_sync::meanfield::{CapSampler, IntegrationOptions};
use dtc_sync::ness::{accumulate_ness, level_spacing_ratio, SpacingRatio};
use dtc_sync::observables::{summarize, trajectory_averages, QuantumSummary, TrajectoryAverages};
use dtc_sync::trajectory::{TrajectoryConfig, TrajectoryEngine, TrajectoryRecord};
use rayon::prelude::*;

use crate::config::{Mode, SweepConfig};
use crate::error::{Result, SweepError};
use crate::output::{decode_record, encode_record, trajectory_file, write_atomic};

/// Mean-field results at one `(Ω, Γ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldPoint {
    pub omega: f64,
    pub gamma: f64,
    pub lle: Option<LyapunovEstimate>,
    pub sync: Option<SyncDiagnostics>,
}

pub fn sampler(cfg: &SweepConfig) -> CapSampler {
    CapSampler::new(cfg.a, cfg.seed).shared(cfg.shared_cap_draw)
}

/// LLE ensemble (unless `mode` is `pearson-map`) and synchronization
/// diagnostics (unless `mode` is `lyapunov-map`).
pub fn meanfield_point(cfg: &SweepConfig, omega: f64, gamma: f64) -> Result<MeanFieldPoint> {
    let p = cfg.params(omega, gamma);
    let sampler = sampler(cfg);
    let lle = match cfg.mode {
        Mode::PearsonMap => None,
        _ => Some(lle_ensemble(&sampler, cfg.nr, &p, &cfg.lyapunov)?),
    };
    let sync = match cfg.mode {
        Mode::LyapunovMap => None,
        _ => {
            let opts = IntegrationOptions::new(cfg.dt, cfg.t_end).record_every(cfg.record_every(cfg.dt));
            let ens = run_ensemble(&sampler, cfg.nr, &p, &opts)?;
            Some(sync_diagnostics(&ens, cfg.window)?)
        }
    };
    Ok(MeanFieldPoint { omega, gamma, lle, sync })
}

/// Runs (or, with `resume`, reloads) trajectories `0..nr` at one point.
/// With `store` set, each finished trajectory is written atomically to its
/// own file before the ensemble is reduced.
pub fn trajectory_ensemble(
    cfg: &SweepConfig,
    omega: f64,
    gamma: f64,
    store: Option<&Path>,
) -> Result<Vec<TrajectoryRecord>> {
    let s = cfg.spin_magnitude();
    let p = cfg.params(omega, gamma);
    let engine = TrajectoryEngine::new(s, p, cfg.dt, cfg.propagator)?;
    let mut base = TrajectoryConfig::new(cfg.dt, cfg.t_end, cfg.record_every(cfg.dt), cfg.seed);
    base.record_entropy = cfg.record_entropy && cfg.mode == Mode::Trajectories;
    if cfg.mode == Mode::NessSpectrum {
        base.snapshot_times = vec![cfg.snapshot_time];
    }
    (0..cfg.nr as u64)
        .into_par_iter()
        .map(|r| {
            let path = store.map(|d| trajectory_file(d, r));
            if let (true, Some(path)) = (cfg.resume, &path) {
                if path.exists() {
                    let bytes = fs::read(path).map_err(SweepError::io(path))?;
                    let rec = decode_record(&bytes, path)?;
                    if rec.trajectory_index != r {
                        return Err(SweepError::Corrupt { path: path.clone(), reason: "trajectory index mismatch".into() });
                    }
                    return Ok(rec);
                }
            }
            let cfg_r = TrajectoryConfig { trajectory_index: r, ..base.clone() };
            let rec = engine.run(&cfg_r)?;
            if let Some(path) = &path {
                write_atomic(path, &encode_record(&rec))?;
            }
            Ok(rec)
        })
        .collect()
}

pub fn quantum_point(cfg: &SweepConfig, records: &[TrajectoryRecord]) -> Result<(QuantumSummary, TrajectoryAverages)> {
    let summary = summarize(records, cfg.spin_magnitude(), cfg.window, cfg.bins, cfg.correlator)?;
    Ok((summary, trajectory_averages(records)?))
}

/// Spacing ratio of the trajectory-averaged density matrix at the snapshot
/// time, with its eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct NessPoint {
    pub time: f64,
    pub ratio: SpacingRatio,
    pub eigenvalues: Vec<f64>,
}

pub fn ness_point(records: &[TrajectoryRecord]) -> Result<NessPoint> {
    let snaps: Vec<_> = records.iter().flat_map(|r| r.snapshots.iter().cloned()).collect();
    let rho = accumulate_ness(&snaps)?;
    let eigenvalues = rho.eigenvalues();
    Ok(NessPoint { time: snaps[0].time, ratio: level_spacing_ratio(&rho)?, eigenvalues })
}

/// Oracle observables next to trajectory averages on a common time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePoint {
    pub oracle: OracleRun,
    pub averages: TrajectoryAverages,
    /// `(traj − oracle)/stderr` per observable and time: `S_A^z`, `S_B^z`,
    /// `S_A^z S_B^z`.
    pub z: [Vec<f64>; 3],
}

impl OraclePoint {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().flatten().fold(0.0, |m, z| m.max(z.abs()))
    }
}

fn z_score(traj: f64, err: f64, oracle: f64) -> f64 {
    let d = traj - oracle;
    if err > 0.0 {
        d / err
    } else if d.abs() < 1e-12 {
        0.0
    } else {
        f64::INFINITY.copysign(d)
    }
}

pub fn oracle_point(cfg: &SweepConfig, omega: f64, gamma: f64, records: &[TrajectoryRecord]) -> Result<OraclePoint> {
    let oracle_cfg = OracleConfig::new(cfg.spin_magnitude(), cfg.oracle_dt, cfg.t_end, cfg.record_every(cfg.oracle_dt));
    let oracle = integrate_from_top(&oracle_cfg, &cfg.params(omega, gamma))?;
    let averages = trajectory_averages(records)?;
    if oracle.times.len() != averages.times.len()
        || oracle.times.iter().zip(&averages.times).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(SweepError::Config(vec![
            "record_interval: must be a multiple of both dt and oracle_dt so the time grids coincide".into(),
        ]));
    }
    let z = [
        (0..oracle.times.len()).map(|k| z_score(averages.saz[k], averages.saz_err[k], oracle.saz[k])).collect(),
        (0..oracle.times.len()).map(|k| z_score(averages.sbz[k], averages.sbz_err[k], oracle.sbz[k])).collect(),
        (0..oracle.times.len()).map(|k| z_score(averages.sazsbz[k], averages.sazsbz_err[k], oracle.sazsbz[k])).collect(),
    ];
    Ok(OraclePoint { oracle, averages, z })
}
