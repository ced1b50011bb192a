//! Sweep configuration: raw (flags or TOML, every field optional), merged,
//! then resolved against per-mode defaults and validated.

use std::path::PathBuf;

use clap::ValueEnum;
use dtc_sync::lyapunov::LyapunovConfig;
use dtc_sync::observables::{CorrelatorKind, DEFAULT_BINS};
use dtc_sync::spin::{ModelParams, SpinMagnitude};
use dtc_sync::trajectory::PropagatorKind;
use serde::{Deserialize, Serialize};

use crate::error::SweepError;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// LLE and synchronization diagnostics on a line or grid.
    MeanfieldSweep,
    /// LLE only.
    LyapunovMap,
    /// Pearson coefficient and magnetizations only.
    PearsonMap,
    /// Quantum trajectories: averages, correlator, histogram modes.
    Trajectories,
    /// Trajectory-averaged late-time density matrix and its spacing ratio.
    NessSpectrum,
    /// Trajectory averages against the master-equation integrator.
    OracleCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::MeanfieldSweep => "meanfield-sweep",
            Mode::LyapunovMap => "lyapunov-map",
            Mode::PearsonMap => "pearson-map",
            Mode::Trajectories => "trajectories",
            Mode::NessSpectrum => "ness-spectrum",
            Mode::OracleCheck => "oracle-check",
        }
    }

    pub fn is_quantum(self) -> bool {
        matches!(self, Mode::Trajectories | Mode::NessSpectrum | Mode::OracleCheck)
    }
}

/// Points on `c1 Ω + c2 Γ = c3` for `Γ` from `gamma_min` to `gamma_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_step: f64,
}

/// Rectangular grid; `Γ` varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_step: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_step: f64,
}

fn range_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

fn check_range(errs: &mut Vec<String>, prefix: &str, lo: f64, hi: f64, step: f64) {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
        errs.push(format!("{prefix}: range bounds and step must be finite"));
        return;
    }
    if step <= 0.0 {
        errs.push(format!("{prefix}_step: must be > 0, got {step}"));
    }
    if hi < lo {
        errs.push(format!("{prefix}_max: must be >= {prefix}_min ({hi} < {lo})"));
    }
    if lo < 0.0 {
        errs.push(format!("{prefix}_min: must be >= 0, got {lo}"));
    }
}

impl LineSpec {
    pub fn points(&self) -> Vec<(f64, f64)> {
        range_points(self.gamma_min, self.gamma_max, self.gamma_step)
            .into_iter()
            .map(|g| ((self.c3 - self.c2 * g) / self.c1, g))
            .collect()
    }

    fn validate(&self, errs: &mut Vec<String>) {
        check_range(errs, "gamma", self.gamma_min, self.gamma_max, self.gamma_step);
        if !(self.c1.is_finite() && self.c1 != 0.0) {
            errs.push(format!("c1: must be finite and nonzero, got {}", self.c1));
            return;
        }
        if errs.is_empty() {
            if let Some((o, g)) = self.points().into_iter().find(|(o, _)| *o < -1e-12) {
                errs.push(format!("line: Ω = {o} < 0 at Γ = {g}"));
            }
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let gammas = range_points(self.gamma_min, self.gamma_max, self.gamma_step);
        range_points(self.omega_min, self.omega_max, self.omega_step)
            .into_iter()
            .flat_map(|o| gammas.iter().map(move |g| (o, *g)))
            .collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (
            range_points(self.omega_min, self.omega_max, self.omega_step).len(),
            range_points(self.gamma_min, self.gamma_max, self.gamma_step).len(),
        )
    }

    fn validate(&self, errs: &mut Vec<String>) {
        check_range(errs, "omega", self.omega_min, self.omega_max, self.omega_step);
        check_range(errs, "gamma", self.gamma_min, self.gamma_max, self.gamma_step);
    }
}

/// Every field optional, as read from flags or a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Option<Mode>,
    pub line: Option<LineSpec>,
    pub grid: Option<GridSpec>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kappa: Option<f64>,
    pub a: Option<f64>,
    pub nr: Option<usize>,
    pub spin: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub window: Option<f64>,
    pub record_interval: Option<f64>,
    pub bins: Option<usize>,
    pub correlator: Option<CorrelatorKind>,
    pub snapshot_time: Option<f64>,
    pub shared_cap_draw: Option<bool>,
    pub propagator: Option<PropagatorKind>,
    pub record_entropy: Option<bool>,
    pub oracle_dt: Option<f64>,
    pub lle_d0: Option<f64>,
    pub lle_interval: Option<f64>,
    pub lle_transient: Option<f64>,
    pub lle_step: Option<f64>,
    pub workers: Option<usize>,
    pub resume: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RawConfig {
    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RawConfig) -> RawConfig {
        overlay!(self, top; mode, line, grid, output, seed, kappa, a, nr, spin, dt, t_end, window,
            record_interval, bins, correlator, snapshot_time, shared_cap_draw, propagator, record_entropy,
            oracle_dt, lle_d0, lle_interval, lle_transient, lle_step, workers, resume);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, SweepError> {
        toml::from_str(text).map_err(|e| SweepError::Config(vec![format!("config file: {}", e.message())]))
    }
}

/// Parameter points of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Points {
    Line(LineSpec),
    Grid(GridSpec),
}

impl Points {
    /// `(Ω, Γ)` pairs in output order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Points::Line(l) => l.points(),
            Points::Grid(g) => g.points(),
        }
    }
}

/// Fully defaulted and validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: Mode,
    pub points: Points,
    pub output: PathBuf,
    pub seed: u64,
    pub kappa: f64,
    /// Cap parameter (mean-field modes).
    pub a: f64,
    /// Initial conditions (mean-field) or trajectories (quantum).
    pub nr: usize,
    /// Spin magnitude (quantum modes).
    pub spin: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Final fraction of the record treated as steady state.
    pub window: f64,
    /// Time between recorded samples.
    pub record_interval: f64,
    pub bins: usize,
    pub correlator: CorrelatorKind,
    pub snapshot_time: f64,
    pub shared_cap_draw: bool,
    pub propagator: PropagatorKind,
    pub record_entropy: bool,
    pub oracle_dt: f64,
    pub lyapunov: LyapunovConfig,
    /// `None`: all available cores.
    pub workers: Option<usize>,
    pub resume: bool,
}

impl SweepConfig {
    pub fn params(&self, omega: f64, gamma: f64) -> ModelParams {
        ModelParams::new(omega.max(0.0), gamma).with_kappa(self.kappa)
    }

    pub fn spin_magnitude(&self) -> SpinMagnitude {
        SpinMagnitude::new(self.spin).expect("validated spin")
    }

    /// Steps between records for a step of `dt`.
    pub fn record_every(&self, dt: f64) -> usize {
        ((self.record_interval / dt).round() as usize).max(1)
    }

    /// Defaults, then validation listing every violated field.
    pub fn resolve(raw: RawConfig) -> Result<Self, SweepError> {
        let mut errs = Vec::new();
        let mode = raw.mode.unwrap_or_else(|| {
            errs.push("mode: required".to_string());
            Mode::MeanfieldSweep
        });
        let quantum = mode.is_quantum();
        let points = match (raw.line, raw.grid) {
            (Some(l), None) => {
                l.validate(&mut errs);
                Some(Points::Line(l))
            }
            (None, Some(g)) => {
                g.validate(&mut errs);
                Some(Points::Grid(g))
            }
            (Some(_), Some(_)) => {
                errs.push("line/grid: give exactly one of a parameter line or a grid".into());
                None
            }
            (None, None) => {
                errs.push("line/grid: a parameter line or a grid is required".into());
                None
            }
        };
        let output = raw.output.unwrap_or_else(|| {
            errs.push("output: required".to_string());
            PathBuf::new()
        });
        let (dt_default, t_default, interval_default) = match mode {
            Mode::OracleCheck => (1e-3, 20.0, 0.5),
            Mode::Trajectories | Mode::NessSpectrum => (1e-4, 100.0, 0.1),
            _ => (1e-3, 1000.0, 0.1),
        };
        let dt = raw.dt.unwrap_or(dt_default);
        let t_end = raw.t_end.unwrap_or(t_default);
        let lle_default = LyapunovConfig::default();
        let cfg = SweepConfig {
            mode,
            points: points.unwrap_or(Points::Line(LineSpec {
                c1: 1.0,
                c2: 1.0,
                c3: 1.0,
                gamma_min: 0.0,
                gamma_max: 0.0,
                gamma_step: 1.0,
            })),
            output,
            seed: raw.seed.unwrap_or(0),
            kappa: raw.kappa.unwrap_or(1.0),
            a: raw.a.unwrap_or(0.1),
            nr: raw.nr.unwrap_or(if quantum { 48 } else { 50 }),
            spin: raw.spin.unwrap_or(if mode == Mode::OracleCheck { 1.0 } else { 5.0 }),
            dt,
            t_end,
            window: raw.window.unwrap_or(0.5),
            record_interval: raw.record_interval.unwrap_or(interval_default),
            bins: raw.bins.unwrap_or(DEFAULT_BINS),
            correlator: raw.correlator.unwrap_or_default(),
            snapshot_time: raw.snapshot_time.unwrap_or(t_end),
            shared_cap_draw: raw.shared_cap_draw.unwrap_or(false),
            propagator: raw.propagator.unwrap_or_default(),
            record_entropy: raw.record_entropy.unwrap_or(true),
            oracle_dt: raw.oracle_dt.unwrap_or(1e-3),
            lyapunov: LyapunovConfig {
                d0: raw.lle_d0.unwrap_or(lle_default.d0),
                interval: raw.lle_interval.unwrap_or(lle_default.interval),
                t_max: t_end,
                transient: raw.lle_transient.unwrap_or(lle_default.transient),
                step: raw.lle_step.unwrap_or(dt),
            },
            workers: raw.workers,
            resume: raw.resume.unwrap_or(false),
        };
        cfg.validate_fields(&mut errs);
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(SweepError::Config(errs))
        }
    }

    fn validate_fields(&self, errs: &mut Vec<String>) {
        let positive = |errs: &mut Vec<String>, name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name}: must be finite and > 0, got {v}"));
            }
        };
        positive(errs, "kappa", self.kappa);
        positive(errs, "dt", self.dt);
        positive(errs, "t_end", self.t_end);
        positive(errs, "record_interval", self.record_interval);
        positive(errs, "oracle_dt", self.oracle_dt);
        if self.dt.is_finite() && self.t_end.is_finite() && self.t_end < self.dt {
            errs.push(format!("t_end: must be >= dt ({} < {})", self.t_end, self.dt));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            errs.push(format!("window: must lie in (0, 1], got {}", self.window));
        }
        if self.nr == 0 {
            errs.push("nr: must be >= 1".into());
        }
        if self.bins == 0 {
            errs.push("bins: must be >= 1".into());
        }
        if self.workers == Some(0) {
            errs.push("workers: must be >= 1".into());
        }
        if self.mode.is_quantum() {
            if SpinMagnitude::new(self.spin).is_err() {
                errs.push(format!("spin: must be a positive half-integer, got {}", self.spin));
            }
            if self.nr < 2 && self.mode != Mode::NessSpectrum {
                errs.push("nr: quantum averages need at least 2 trajectories".into());
            }
            if self.mode == Mode::OracleCheck && self.spin > 4.0 {
                errs.push(format!("spin: oracle-check is limited to S <= 4, got {}", self.spin));
            }
            if !(self.snapshot_time >= 0.0 && self.snapshot_time <= self.t_end) {
                errs.push(format!("snapshot_time: must lie in [0, t_end], got {}", self.snapshot_time));
            }
        } else {
            if !(self.a > 0.0 && self.a <= 1.0) {
                errs.push(format!("a: must lie in (0, 1], got {}", self.a));
            }
            if self.mode != Mode::PearsonMap {
                if let Err(e) = self.lyapunov.validate() {
                    errs.push(format!("lyapunov: {e}"));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> LineSpec {
        LineSpec { c1: 1.0, c2: 1.0, c3: 1.5, gamma_min: 1.0, gamma_max: 1.4, gamma_step: 0.1 }
    }

    #[test]
    fn line_points() {
        let pts = line().points();
        assert_eq!(pts.len(), 5);
        assert!((pts[2].0 - 0.3).abs() < 1e-12 && (pts[2].1 - 1.2).abs() < 1e-12);
        let l2 = LineSpec { c1: 2.0, c2: 1.0, c3: 2.0, gamma_min: 0.5, gamma_max: 1.5, gamma_step: 0.5 };
        assert_eq!(l2.points(), vec![(0.75, 0.5), (0.5, 1.0), (0.25, 1.5)]);
    }

    #[test]
    fn grid_order() {
        let g = GridSpec { omega_min: 0.0, omega_max: 1.0, omega_step: 1.0, gamma_min: 0.0, gamma_max: 2.0, gamma_step: 1.0 };
        assert_eq!(g.shape(), (2, 3));
        assert_eq!(g.points()[..3], [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]);
    }

    #[test]
    fn validation_enumerates_every_field() {
        let raw = RawConfig {
            mode: Some(Mode::Trajectories),
            line: Some(LineSpec { gamma_step: -1.0, ..line() }),
            dt: Some(0.0),
            nr: Some(0),
            spin: Some(0.7),
            window: Some(2.0),
            ..Default::default()
        };
        let SweepError::Config(errs) = SweepConfig::resolve(raw).unwrap_err() else { panic!() };
        for field in ["gamma_step", "output", "dt", "nr", "spin", "window"] {
            assert!(errs.iter().any(|e| e.starts_with(field)), "missing {field} in {errs:?}");
        }
    }

    #[test]
    fn negative_omega_on_line_rejected() {
        let raw = RawConfig {
            mode: Some(Mode::PearsonMap),
            line: Some(LineSpec { gamma_max: 2.0, ..line() }),
            output: Some("x".into()),
            ..Default::default()
        };
        assert!(SweepConfig::resolve(raw).is_err());
    }

    #[test]
    fn toml_overrides_flags() {
        let flags = RawConfig { seed: Some(1), nr: Some(10), ..Default::default() };
        let file = RawConfig::from_toml(
            "mode = \"lyapunov-map\"\nseed = 7\noutput = \"o\"\n[line]\nc1 = 1\nc2 = 1\nc3 = 1.5\ngamma_min = 1.0\ngamma_max = 1.2\ngamma_step = 0.1\n",
        )
        .unwrap();
        let merged = flags.overlay(&file);
        assert_eq!(merged.seed, Some(7));
        assert_eq!(merged.nr, Some(10));
        let cfg = SweepConfig::resolve(merged).unwrap();
        assert_eq!(cfg.mode, Mode::LyapunovMap);
        assert_eq!(cfg.lyapunov.t_max, 1000.0);
        assert!(RawConfig::from_toml("bogus = 1").is_err());
    }
}
