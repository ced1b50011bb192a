//! Parameter sweeps over `(Ω, Γ)` lines and grids for the `dtc-sync`
//! kernels, with reproducible seeding and plain-text outputs.
//!
//! A run writes into its output directory:
//!
//! - `manifest.json`: resolved configuration, seed, version, wall time;
//! - one `#`-headed columnar table per mode (`meanfield.tsv`,
//!   `trajectories.tsv`, `ness.tsv`, `oracle.tsv`);
//! - sidecars: per-point histograms, time series and eigenvalues;
//! - for quantum modes, one binary file per trajectory under `records/`
//!   (reused by `resume`) and, for `ness-spectrum`, state snapshots under
//!   `snapshots/`.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dtc_sync::lyapunov::ExponentSign;
use serde::Serialize;

pub use config::{GridSpec, LineSpec, Mode, Points, RawConfig, SweepConfig};
pub use error::{Result, SweepError};
use output::{col, encode_snapshot, point_dir, write_atomic, Cell, Table};
use pipeline::{meanfield_point, ness_point, oracle_point, quantum_point, trajectory_ensemble};

/// Environment variable read for the worker count when no flag is given.
pub const WORKERS_ENV: &str = "DTCSYNC_WORKERS";

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub mode: &'static str,
    pub seed: u64,
    pub config: SweepConfig,
    pub points: usize,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub wall_time_seconds: f64,
}

/// Executes the configured pipeline on a worker pool of the configured size.
pub fn run(cfg: &SweepConfig) -> Result<Manifest> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SweepError::Config(vec![format!("workers: {e}")]))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &SweepConfig) -> Result<Manifest> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let root = &cfg.output;
    std::fs::create_dir_all(root).map_err(SweepError::io(root))?;
    let points = cfg.points.points();
    let mut outputs = Vec::new();
    match cfg.mode {
        Mode::MeanfieldSweep | Mode::LyapunovMap | Mode::PearsonMap => meanfield(cfg, &points, &mut outputs)?,
        Mode::Trajectories => trajectories(cfg, &points, &mut outputs)?,
        Mode::NessSpectrum => ness(cfg, &points, &mut outputs)?,
        Mode::OracleCheck => oracle(cfg, &points, &mut outputs)?,
    }
    let manifest = Manifest {
        program: "dtcsync",
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode.name(),
        seed: cfg.seed,
        config: cfg.clone(),
        points: points.len(),
        outputs: outputs.iter().map(|p| relative(root, p)).collect(),
        started_unix,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&root.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

fn header(cfg: &SweepConfig, title: &str, columns: Vec<output::Column>) -> Table {
    let mut t = Table::new(title, columns)
        .meta("mode", cfg.mode.name())
        .meta("seed", cfg.seed)
        .meta("kappa", cfg.kappa);
    match &cfg.points {
        Points::Line(l) => t = t.meta("line", format!("{} Ω + {} Γ = {}", l.c1, l.c2, l.c3)),
        Points::Grid(g) => {
            let (no, ng) = g.shape();
            t = t.meta("grid", format!("{no} Ω values x {ng} Γ values, Γ fastest"));
        }
    }
    t
}

fn progress(cfg: &SweepConfig, k: usize, n: usize, omega: f64, gamma: f64) {
    eprintln!("[{}] point {}/{}: Ω = {omega}, Γ = {gamma}", cfg.mode.name(), k + 1, n);
}

fn meanfield(cfg: &SweepConfig, points: &[(f64, f64)], outputs: &mut Vec<PathBuf>) -> Result<()> {
    let mut cols = vec![col("gamma", "kappa"), col("omega", "kappa")];
    if cfg.mode != Mode::PearsonMap {
        cols.extend([
            col("lle_mean", "kappa"),
            col("lle_stderr", "kappa"),
            col("lle_samples", "1"),
            col("lle_failed", "1"),
            col("lle_sign", "1"),
        ]);
    }
    if cfg.mode != Mode::LyapunovMap {
        cols.extend([
            col("pearson", "1"),
            col("pearson_excluded", "fraction"),
            col("maz", "1"),
            col("mbz", "1"),
            col("delta_m", "1"),
            col("rel_sign", "1"),
        ]);
    }
    let mut table = header(cfg, cfg.mode.name(), cols)
        .meta("a", cfg.a)
        .meta("nr", cfg.nr)
        .meta("t_end", cfg.t_end)
        .meta("dt", cfg.dt)
        .meta("window", cfg.window)
        .meta("shared_cap_draw", cfg.shared_cap_draw);
    for (k, (omega, gamma)) in points.iter().enumerate() {
        progress(cfg, k, points.len(), *omega, *gamma);
        let pt = meanfield_point(cfg, *omega, *gamma)?;
        let mut row: Vec<Cell> = vec![(*gamma).into(), (*omega).into()];
        if let Some(l) = &pt.lle {
            let sign: i8 = match l.classify() {
                ExponentSign::Negative => -1,
                ExponentSign::Vanishing => 0,
                ExponentSign::Positive => 1,
            };
            row.extend([l.mean.into(), l.stderr.into(), l.count.into(), l.failed.len().into(), sign.into()]);
        }
        if let Some(s) = &pt.sync {
            row.extend([
                s.pearson_bar.into(),
                s.pearson_excluded_fraction.into(),
                s.maz_bar.into(),
                s.mbz_bar.into(),
                s.delta_m.into(),
                s.rel_sign.into(),
            ]);
        }
        table.push(row);
    }
    let path = cfg.output.join("meanfield.tsv");
    table.write(&path)?;
    outputs.push(path);
    Ok(())
}

fn trajectories(cfg: &SweepConfig, points: &[(f64, f64)], outputs: &mut Vec<PathBuf>) -> Result<()> {
    let s = cfg.spin_magnitude();
    let mut table = header(
        cfg,
        "trajectories",
        vec![
            col("gamma", "kappa"),
            col("omega", "kappa"),
            col("S", "hbar"),
            col("nr", "1"),
            col("saz_bar", "hbar"),
            col("sbz_bar", "hbar"),
            col("czz", "hbar^2"),
            col("saz_max", "hbar"),
            col("sbz_max", "hbar"),
            col("entropy_max", "nats"),
            col("saz_max_stable", "bool"),
            col("sbz_max_stable", "bool"),
            col("entropy_max_stable", "bool"),
        ],
    )
    .meta("dt", cfg.dt)
    .meta("t_end", cfg.t_end)
    .meta("window", cfg.window)
    .meta("bins", cfg.bins)
    .meta("correlator", format!("{:?}", cfg.correlator));
    for (k, (omega, gamma)) in points.iter().enumerate() {
        progress(cfg, k, points.len(), *omega, *gamma);
        let records = trajectory_ensemble(cfg, *omega, *gamma, Some(&point_dir(&cfg.output, "records", k)))?;
        let (sum, avg) = quantum_point(cfg, &records)?;
        let (ent_center, ent_stable) = match &sum.entropy_mode {
            Some(m) => (m.center, m.stable),
            None => (f64::NAN, false),
        };
        table.push(vec![
            (*gamma).into(),
            (*omega).into(),
            s.value().into(),
            cfg.nr.into(),
            sum.saz_bar.into(),
            sum.sbz_bar.into(),
            sum.correlator.into(),
            sum.saz_mode.center.into(),
            sum.sbz_mode.center.into(),
            ent_center.into(),
            sum.saz_mode.stable.into(),
            sum.sbz_mode.stable.into(),
            ent_stable.into(),
        ]);

        let mut hist = Table::new(
            "magnetization histogram",
            vec![col("bin_lo", "hbar"), col("bin_hi", "hbar"), col("saz_count", "1"), col("sbz_count", "1")],
        )
        .meta("gamma", gamma)
        .meta("omega", omega);
        let edges = sum.saz_hist.edges();
        for b in 0..sum.saz_hist.bins() {
            hist.push(vec![edges[b].into(), edges[b + 1].into(), sum.saz_hist.counts[b].into(), sum.sbz_hist.counts[b].into()]);
        }
        let path = point_dir(&cfg.output, "hist", k).with_extension("tsv");
        hist.write(&path)?;
        outputs.push(path);
        if let Some(h) = &sum.entropy_hist {
            let mut et = Table::new("entropy histogram", vec![col("bin_lo", "nats"), col("bin_hi", "nats"), col("count", "1")])
                .meta("gamma", gamma)
                .meta("omega", omega);
            let edges = h.edges();
            for b in 0..h.bins() {
                et.push(vec![edges[b].into(), edges[b + 1].into(), h.counts[b].into()]);
            }
            let path = cfg.output.join("hist").join(format!("point_{k:04}_entropy.tsv"));
            et.write(&path)?;
            outputs.push(path);
        }

        let mut series = Table::new(
            "trajectory averages",
            vec![
                col("t", "1/kappa"),
                col("saz", "hbar"),
                col("saz_err", "hbar"),
                col("sbz", "hbar"),
                col("sbz_err", "hbar"),
                col("sazsbz", "hbar^2"),
                col("sazsbz_err", "hbar^2"),
            ],
        )
        .meta("gamma", gamma)
        .meta("omega", omega)
        .meta("source", "trajectories");
        for i in 0..avg.times.len() {
            series.push(vec![
                avg.times[i].into(),
                avg.saz[i].into(),
                avg.saz_err[i].into(),
                avg.sbz[i].into(),
                avg.sbz_err[i].into(),
                avg.sazsbz[i].into(),
                avg.sazsbz_err[i].into(),
            ]);
        }
        let path = point_dir(&cfg.output, "series", k).with_extension("tsv");
        series.write(&path)?;
        outputs.push(path);
    }
    let path = cfg.output.join("trajectories.tsv");
    table.write(&path)?;
    outputs.push(path);
    Ok(())
}

fn ness(cfg: &SweepConfig, points: &[(f64, f64)], outputs: &mut Vec<PathBuf>) -> Result<()> {
    let s = cfg.spin_magnitude();
    let mut table = header(
        cfg,
        "ness-spectrum",
        vec![
            col("gamma", "kappa"),
            col("omega", "kappa"),
            col("S", "hbar"),
            col("nr", "1"),
            col("t", "1/kappa"),
            col("r_s", "1"),
            col("count", "1"),
            col("skipped", "1"),
        ],
    )
    .meta("dt", cfg.dt);
    for (k, (omega, gamma)) in points.iter().enumerate() {
        progress(cfg, k, points.len(), *omega, *gamma);
        let records = trajectory_ensemble(cfg, *omega, *gamma, Some(&point_dir(&cfg.output, "records", k)))?;
        let snap_dir = point_dir(&cfg.output, "snapshots", k);
        for rec in &records {
            for snap in &rec.snapshots {
                let path = snap_dir.join(format!("traj_{:06}_t{}.bin", rec.trajectory_index, snap.slot));
                write_atomic(&path, &encode_snapshot(snap.time, &snap.state))?;
            }
        }
        let pt = ness_point(&records)?;
        table.push(vec![
            (*gamma).into(),
            (*omega).into(),
            s.value().into(),
            cfg.nr.into(),
            pt.time.into(),
            pt.ratio.r.into(),
            pt.ratio.count.into(),
            pt.ratio.skipped.into(),
        ]);
        let mut eig = Table::new("NESS eigenvalues, ascending", vec![col("index", "1"), col("eigenvalue", "1")])
            .meta("gamma", gamma)
            .meta("omega", omega);
        for (i, e) in pt.eigenvalues.iter().enumerate() {
            eig.push(vec![i.into(), (*e).into()]);
        }
        let path = point_dir(&cfg.output, "eig", k).with_extension("tsv");
        eig.write(&path)?;
        outputs.push(path);
    }
    let path = cfg.output.join("ness.tsv");
    table.write(&path)?;
    outputs.push(path);
    Ok(())
}

fn oracle(cfg: &SweepConfig, points: &[(f64, f64)], outputs: &mut Vec<PathBuf>) -> Result<()> {
    let s = cfg.spin_magnitude();
    let mut table = header(
        cfg,
        "oracle-check",
        vec![
            col("gamma", "kappa"),
            col("omega", "kappa"),
            col("S", "hbar"),
            col("nr", "1"),
            col("max_abs_z", "1"),
            col("within_3sigma", "bool"),
        ],
    )
    .meta("dt", cfg.dt)
    .meta("oracle_dt", cfg.oracle_dt)
    .meta("t_end", cfg.t_end);
    for (k, (omega, gamma)) in points.iter().enumerate() {
        progress(cfg, k, points.len(), *omega, *gamma);
        let records = trajectory_ensemble(cfg, *omega, *gamma, Some(&point_dir(&cfg.output, "records", k)))?;
        let pt = oracle_point(cfg, *omega, *gamma, &records)?;
        let max_z = pt.max_abs_z();
        table.push(vec![(*gamma).into(), (*omega).into(), s.value().into(), cfg.nr.into(), max_z.into(), (max_z <= 3.0).into()]);
        let mut series = Table::new(
            "oracle vs trajectories",
            vec![
                col("t", "1/kappa"),
                col("oracle_saz", "hbar"),
                col("traj_saz", "hbar"),
                col("traj_saz_err", "hbar"),
                col("oracle_sbz", "hbar"),
                col("traj_sbz", "hbar"),
                col("traj_sbz_err", "hbar"),
                col("oracle_sazsbz", "hbar^2"),
                col("traj_sazsbz", "hbar^2"),
                col("traj_sazsbz_err", "hbar^2"),
            ],
        )
        .meta("gamma", gamma)
        .meta("omega", omega)
        .meta("source", "oracle+trajectories");
        let (o, a) = (&pt.oracle, &pt.averages);
        for i in 0..o.times.len() {
            series.push(vec![
                o.times[i].into(),
                o.saz[i].into(),
                a.saz[i].into(),
                a.saz_err[i].into(),
                o.sbz[i].into(),
                a.sbz[i].into(),
                a.sbz_err[i].into(),
                o.sazsbz[i].into(),
                a.sazsbz[i].into(),
                a.sazsbz_err[i].into(),
            ]);
        }
        let path = point_dir(&cfg.output, "oracle", k).with_extension("tsv");
        series.write(&path)?;
        outputs.push(path);
    }
    let path = cfg.output.join("oracle.tsv");
    table.write(&path)?;
    outputs.push(path);
    Ok(())
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/sweeps.md")]
struct Guide;
