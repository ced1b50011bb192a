use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dtc_sweep::{GridSpec, LineSpec, Mode, RawConfig, SweepConfig, SweepError, WORKERS_ENV};
use dtc_sync::observables::CorrelatorKind;
use dtc_sync::trajectory::PropagatorKind;

/// Parameter sweeps for two coupled dissipative time crystals.
///
/// Give a line (`--c1 --c2 --c3` plus the Γ range) or a grid (Ω and Γ
/// ranges). A `--config` TOML file overrides any flag it also sets.
#[derive(Debug, Parser)]
#[command(name = "dtcsync", version)]
struct Cli {
    /// TOML file with the same fields as the flags (`[line]`/`[grid]` tables).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,

    /// Line `c1 Ω + c2 Γ = c3`.
    #[arg(long, requires_all = ["c2", "c3"])]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_step: Option<f64>,
    /// Ω range; setting any of these selects a grid.
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    omega_step: Option<f64>,

    #[arg(long)]
    kappa: Option<f64>,
    /// Cap parameter for mean-field initial conditions.
    #[arg(long)]
    a: Option<f64>,
    /// Ensemble size (initial conditions or trajectories).
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    spin: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    record_interval: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum)]
    correlator: Option<Correlator>,
    #[arg(long)]
    snapshot_time: Option<f64>,
    #[arg(long)]
    shared_cap_draw: bool,
    #[arg(long, value_enum)]
    propagator: Option<Propagator>,
    #[arg(long)]
    no_entropy: bool,
    #[arg(long)]
    oracle_dt: Option<f64>,
    #[arg(long)]
    lle_d0: Option<f64>,
    #[arg(long)]
    lle_interval: Option<f64>,
    #[arg(long)]
    lle_transient: Option<f64>,
    #[arg(long)]
    lle_step: Option<f64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Reuse per-trajectory files already present in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Copy, Clone, Debug, clap::ValueEnum)]
enum Correlator {
    Ensemble,
    TrajectoryResolved,
}

#[derive(Copy, Clone, Debug, clap::ValueEnum)]
enum Propagator {
    Auto,
    Dense,
    Taylor,
}

impl Cli {
    fn raw(&self) -> Result<RawConfig, SweepError> {
        let mut errs = Vec::new();
        let gamma = (self.gamma_min, self.gamma_max, self.gamma_step);
        let line = self.c1.map(|c1| LineSpec {
            c1,
            c2: self.c2.unwrap_or(f64::NAN),
            c3: self.c3.unwrap_or(f64::NAN),
            gamma_min: gamma.0.unwrap_or(f64::NAN),
            gamma_max: gamma.1.unwrap_or(f64::NAN),
            gamma_step: gamma.2.unwrap_or(f64::NAN),
        });
        let any_omega = self.omega_min.is_some() || self.omega_max.is_some() || self.omega_step.is_some();
        let grid = any_omega.then(|| GridSpec {
            omega_min: self.omega_min.unwrap_or(f64::NAN),
            omega_max: self.omega_max.unwrap_or(f64::NAN),
            omega_step: self.omega_step.unwrap_or(f64::NAN),
            gamma_min: gamma.0.unwrap_or(f64::NAN),
            gamma_max: gamma.1.unwrap_or(f64::NAN),
            gamma_step: gamma.2.unwrap_or(f64::NAN),
        });
        if (line.is_some() || grid.is_some()) && [gamma.0, gamma.1, gamma.2].iter().any(Option::is_none) {
            errs.push("gamma_min/gamma_max/gamma_step: all three are required".to_string());
        }
        if !errs.is_empty() {
            return Err(SweepError::Config(errs));
        }
        Ok(RawConfig {
            mode: self.mode,
            line,
            grid,
            output: self.output.clone(),
            seed: self.seed,
            kappa: self.kappa,
            a: self.a,
            nr: self.nr,
            spin: self.spin,
            dt: self.dt,
            t_end: self.t_end,
            window: self.window,
            record_interval: self.record_interval,
            bins: self.bins,
            correlator: self.correlator.map(|c| match c {
                Correlator::Ensemble => CorrelatorKind::Ensemble,
                Correlator::TrajectoryResolved => CorrelatorKind::TrajectoryResolved,
            }),
            snapshot_time: self.snapshot_time,
            shared_cap_draw: self.shared_cap_draw.then_some(true),
            propagator: self.propagator.map(|p| match p {
                Propagator::Auto => PropagatorKind::Auto,
                Propagator::Dense => PropagatorKind::Dense,
                Propagator::Taylor => PropagatorKind::Taylor,
            }),
            record_entropy: self.no_entropy.then_some(false),
            oracle_dt: self.oracle_dt,
            lle_d0: self.lle_d0,
            lle_interval: self.lle_interval,
            lle_transient: self.lle_transient,
            lle_step: self.lle_step,
            workers: self.workers,
            resume: self.resume.then_some(true),
        })
    }
}

fn execute(cli: &Cli) -> Result<(), SweepError> {
    let mut raw = cli.raw()?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io { path: path.clone(), source })?;
        let file = RawConfig::from_toml(&text)?;
        // A file that names a line or grid replaces whichever the flags gave.
        if file.line.is_some() || file.grid.is_some() {
            raw.line = None;
            raw.grid = None;
        }
        raw = raw.overlay(&file);
    }
    let cfg = SweepConfig::resolve(raw)?;
    let manifest = dtc_sweep::run(&cfg)?;
    eprintln!(
        "done: {} points in {:.1} s, outputs in {}",
        manifest.points,
        manifest.wall_time_seconds,
        cfg.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
