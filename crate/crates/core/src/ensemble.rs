//! Initial-condition ensembles of the mean-field flow and their
//! synchronization diagnostics.
//!
//! All reductions over members sort their inputs first, so every output is
//! bit-identical under any permutation of the members.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::meanfield::{integrate_visit, CapSampler, IntegrationOptions};
use crate::spin::ModelParams;

/// Variance below which the ensemble Pearson coefficient is undefined.
pub const MIN_VARIANCE: f64 = 1e-14;

/// `m_A^z(t)` and `m_B^z(t)` for every member on a shared time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    /// `maz[member][time]`.
    pub maz: Vec<Vec<f64>>,
    pub mbz: Vec<Vec<f64>>,
}

impl EnsembleSeries {
    pub fn new(times: Vec<f64>, maz: Vec<Vec<f64>>, mbz: Vec<Vec<f64>>) -> Result<Self> {
        if maz.len() != mbz.len() {
            return Err(Error::DimensionMismatch { expected: maz.len(), found: mbz.len() });
        }
        for series in maz.iter().chain(&mbz) {
            if series.len() != times.len() {
                return Err(Error::DimensionMismatch { expected: times.len(), found: series.len() });
            }
        }
        Ok(Self { times, maz, mbz })
    }

    pub fn members(&self) -> usize {
        self.maz.len()
    }

    /// First index of the final `window` fraction of the grid.
    pub fn window_start(&self, window: f64) -> Result<usize> {
        window_start(self.times.len(), window)
    }
}

/// First index of the final `window` fraction of an `n`-point grid.
pub fn window_start(n: usize, window: f64) -> Result<usize> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(invalid("window", format!("must lie in (0, 1], got {window}")));
    }
    let start = ((1.0 - window) * n as f64).floor() as usize;
    Ok(start.min(n.saturating_sub(1)))
}

/// Integrates `nr` cap-sampled initial conditions, keeping only the
/// z-components.
pub fn run_ensemble(sampler: &CapSampler, nr: usize, p: &ModelParams, opts: &IntegrationOptions) -> Result<EnsembleSeries> {
    let initial = sampler.sample(nr)?;
    opts.validate()?;
    let members: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = initial
        .par_iter()
        .map(|s0| {
            let mut t = Vec::new();
            let mut a = Vec::new();
            let mut b = Vec::new();
            integrate_visit(s0, p, opts, |time, s| {
                t.push(time);
                a.push(s.ma[2]);
                b.push(s.mb[2]);
            })?;
            Ok((t, a, b))
        })
        .collect();
    let mut times = Vec::new();
    let mut maz = Vec::with_capacity(nr);
    let mut mbz = Vec::with_capacity(nr);
    for m in members {
        let (t, a, b) = m?;
        times = t;
        maz.push(a);
        mbz.push(b);
    }
    EnsembleSeries::new(times, maz, mbz)
}

fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Ensemble Pearson coefficient of `(m_A^z, m_B^z)` at grid index `t_index`;
/// `None` where either variance is below [`MIN_VARIANCE`].
pub fn pearson_t(ens: &EnsembleSeries, t_index: usize) -> Result<Option<f64>> {
    let n = ens.members();
    if n < 2 {
        return Err(invalid("members", "Pearson coefficient needs at least two members"));
    }
    if t_index >= ens.times.len() {
        return Err(invalid("t_index", format!("{t_index} outside grid of {}", ens.times.len())));
    }
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|r| (ens.maz[r][t_index], ens.mbz[r][t_index])).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    Ok(pearson_sorted(&pairs))
}

fn pearson_sorted(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (a, b) in pairs {
        sa += a;
        sb += b;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        let (da, db) = (a - ma, b - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    let (cov, va, vb) = (cov / n, va / n, vb / n);
    if va < MIN_VARIANCE || vb < MIN_VARIANCE {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

/// Time average of the defined `C_P(t)` over the steady window.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct PearsonSummary {
    pub mean: f64,
    /// Grid points in the window where `C_P` was undefined.
    pub excluded: usize,
    pub window_points: usize,
}

impl PearsonSummary {
    pub fn excluded_fraction(&self) -> f64 {
        self.excluded as f64 / self.window_points as f64
    }
}

pub fn pearson_steady(ens: &EnsembleSeries, window: f64) -> Result<PearsonSummary> {
    let start = ens.window_start(window)?;
    let len = ens.times.len();
    let mut sum = 0.0;
    let mut defined = 0usize;
    for t in start..len {
        if let Some(c) = pearson_t(ens, t)? {
            sum += c;
            defined += 1;
        }
    }
    let window_points = len - start;
    if defined == 0 {
        return Err(Error::DegenerateEnsemble(format!(
            "Pearson coefficient undefined at all {window_points} window times"
        )));
    }
    Ok(PearsonSummary { mean: sum / defined as f64, excluded: window_points - defined, window_points })
}

/// Steady-state synchronization diagnostics of one parameter point.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct SyncDiagnostics {
    /// `None` when the ensemble collapsed onto a single point.
    pub pearson_bar: Option<f64>,
    pub pearson_excluded_fraction: f64,
    pub maz_bar: f64,
    pub mbz_bar: f64,
    /// `⟨m̄_B^z⟩ − ⟨m̄_A^z⟩`.
    pub delta_m: f64,
    /// Sign of `⟨m̄_A^z⟩⟨m̄_B^z⟩`; a zero product counts as `+1`.
    pub rel_sign: i8,
}

/// Time average over the window per member, then ensemble average.
pub fn magnetization_averages(ens: &EnsembleSeries, window: f64) -> Result<(f64, f64)> {
    let start = ens.window_start(window)?;
    if ens.members() == 0 {
        return Err(invalid("members", "empty ensemble"));
    }
    let time_avg = |s: &Vec<f64>| s[start..].iter().sum::<f64>() / (s.len() - start) as f64;
    let n = ens.members() as f64;
    let a = sorted_sum(ens.maz.iter().map(time_avg).collect()) / n;
    let b = sorted_sum(ens.mbz.iter().map(time_avg).collect()) / n;
    Ok((a, b))
}

pub fn sync_diagnostics(ens: &EnsembleSeries, window: f64) -> Result<SyncDiagnostics> {
    let (maz_bar, mbz_bar) = magnetization_averages(ens, window)?;
    let (pearson_bar, excluded) = match pearson_steady(ens, window) {
        Ok(s) => (Some(s.mean), s.excluded_fraction()),
        Err(Error::DegenerateEnsemble(_)) => (None, 1.0),
        Err(e) => return Err(e),
    };
    Ok(SyncDiagnostics {
        pearson_bar,
        pearson_excluded_fraction: excluded,
        maz_bar,
        mbz_bar,
        delta_m: mbz_bar - maz_bar,
        rel_sign: if maz_bar * mbz_bar >= 0.0 { 1 } else { -1 },
    })
}
