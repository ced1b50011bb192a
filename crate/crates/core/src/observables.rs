//! Trajectory-resolved observables: partial traces, entanglement entropy,
//! ensemble averages with standard errors, the connected `zz` correlator and
//! time-and-trajectory histograms.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::ensemble::window_start;
use crate::error::{invalid, Error, Result};
use crate::spin::{CMatrix, SpinMagnitude};
use crate::trajectory::{PureState, TrajectoryRecord};

/// Eigenvalues below this are treated as zero in the entropy.
pub const ENTROPY_CLIP: f64 = 1e-14;
/// Allowed trace defect of an input to [`entanglement_entropy`].
pub const ENTROPY_TRACE_TOL: f64 = 1e-8;
pub const DEFAULT_BINS: usize = 101;
/// Bin counts used to check that a mode does not depend on the binning.
pub const STABILITY_BINS: [usize; 2] = [81, 121];

/// `Tr_B |ψ⟩⟨ψ|`.
pub fn reduced_density_matrix(psi: &PureState) -> DensityMatrix {
    partial_trace(psi, true)
}

/// `Tr_A |ψ⟩⟨ψ|`.
pub fn reduced_density_matrix_b(psi: &PureState) -> DensityMatrix {
    partial_trace(psi, false)
}

fn partial_trace(psi: &PureState, keep_a: bool) -> DensityMatrix {
    let d = psi.spin.dim();
    let amp = |kept: usize, traced: usize| {
        if keep_a {
            psi.amplitudes[kept * d + traced]
        } else {
            psi.amplitudes[traced * d + kept]
        }
    };
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..d {
                acc += amp(i, b) * amp(j, b).conj();
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc.conj();
        }
    }
    DensityMatrix::new_unchecked(m).expect("partial trace of a finite state is Hermitian")
}

/// Von Neumann entropy `−Tr ρ ln ρ` in nats.
pub fn entanglement_entropy(rho: &DensityMatrix) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > ENTROPY_TRACE_TOL {
        return Err(Error::InvalidDensityMatrix(format!("trace {tr} in entropy")));
    }
    Ok(rho.eigenvalues().into_iter().filter(|&l| l >= ENTROPY_CLIP).map(|l| -l * l.ln()).sum())
}

/// Mean and standard error of the mean at every recorded time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryAverages {
    pub times: Vec<f64>,
    pub trajectories: usize,
    pub saz: Vec<f64>,
    pub saz_err: Vec<f64>,
    pub sbz: Vec<f64>,
    pub sbz_err: Vec<f64>,
    pub sazsbz: Vec<f64>,
    pub sazsbz_err: Vec<f64>,
    /// Empty if any record lacks entropies.
    pub entropy: Vec<f64>,
}

fn check_grid(records: &[TrajectoryRecord], min: usize) -> Result<&[f64]> {
    if records.len() < min {
        return Err(Error::DegenerateEnsemble(format!("need at least {min} trajectories, got {}", records.len())));
    }
    let times = &records[0].times;
    if times.is_empty() {
        return Err(Error::DegenerateEnsemble("records hold no samples".into()));
    }
    for r in records {
        if r.times != *times || r.saz.len() != times.len() || r.sbz.len() != times.len() || r.sazsbz.len() != times.len() {
            return Err(invalid("records", "trajectories are recorded on different time grids"));
        }
    }
    Ok(times)
}

fn mean_err(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Averages over trajectories; records must share the time grid. The
/// result depends only on the set of records, not on their order.
pub fn trajectory_averages(records: &[TrajectoryRecord]) -> Result<TrajectoryAverages> {
    let times = check_grid(records, 1)?.to_vec();
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.trajectory_index);
    let n = sorted.len();
    let with_entropy = sorted.iter().all(|r| r.entropy.len() == times.len());
    let mut out = TrajectoryAverages {
        times,
        trajectories: n,
        saz: Vec::new(),
        saz_err: Vec::new(),
        sbz: Vec::new(),
        sbz_err: Vec::new(),
        sazsbz: Vec::new(),
        sazsbz_err: Vec::new(),
        entropy: Vec::new(),
    };
    for k in 0..out.times.len() {
        let (m, e) = mean_err(sorted.iter().map(|r| r.saz[k]), n);
        out.saz.push(m);
        out.saz_err.push(e);
        let (m, e) = mean_err(sorted.iter().map(|r| r.sbz[k]), n);
        out.sbz.push(m);
        out.sbz_err.push(e);
        let (m, e) = mean_err(sorted.iter().map(|r| r.sazsbz[k]), n);
        out.sazsbz.push(m);
        out.sazsbz_err.push(e);
        if with_entropy {
            out.entropy.push(sorted.iter().map(|r| r.entropy[k]).sum::<f64>() / n as f64);
        }
    }
    Ok(out)
}

/// Which product enters the connected correlator.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelatorKind {
    /// `⟨A B⟩ − ⟨A⟩⟨B⟩` with every bracket an ensemble average, i.e. the
    /// connected correlator of the unconditional state.
    #[default]
    Ensemble,
    /// Average over trajectories of `⟨A B⟩_r − ⟨A⟩_r ⟨B⟩_r`.
    TrajectoryResolved,
}

/// Connected `S_A^z S_B^z` correlator, time-averaged over the final
/// `window` fraction of the record.
pub fn connected_correlator(records: &[TrajectoryRecord], window: f64, kind: CorrelatorKind) -> Result<f64> {
    let times = check_grid(records, 2)?;
    let start = window_start(times.len(), window)?;
    let avg = trajectory_averages(records)?;
    let n = records.len() as f64;
    let mut sum = 0.0;
    for k in start..times.len() {
        sum += match kind {
            CorrelatorKind::Ensemble => avg.sazsbz[k] - avg.saz[k] * avg.sbz[k],
            CorrelatorKind::TrajectoryResolved => {
                avg.sazsbz[k] - sorted_sum(records.iter().map(|r| r.saz[k] * r.sbz[k])) / n
            }
        };
    }
    Ok(sum / (times.len() - start) as f64)
}

fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Uniform-bin histogram on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("bins", "must be >= 1"));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(invalid("range", format!("[{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi, counts: vec![0; bins] })
    }

    /// `[−S, S]`, the range of a subsystem magnetization.
    pub fn magnetization(bins: usize, s: SpinMagnitude) -> Result<Self> {
        Self::new(bins, -s.value(), s.value())
    }

    /// `[0, ln(2S+1)]`, the range of the subsystem entropy.
    pub fn entropy(bins: usize, s: SpinMagnitude) -> Result<Self> {
        Self::new(bins, 0.0, (s.dim() as f64).ln())
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins()).map(|k| self.lo + k as f64 * self.width()).collect()
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.width()
    }

    /// Rounding slack at the range ends, relative to the range.
    fn slack(&self) -> f64 {
        1e-9 * (self.hi - self.lo)
    }

    pub fn add(&mut self, value: f64) -> Result<()> {
        if !(value >= self.lo - self.slack() && value <= self.hi + self.slack()) {
            return Err(Error::OutOfRange { value, lo: self.lo, hi: self.hi });
        }
        let k = (((value - self.lo) / self.width()).floor().max(0.0) as usize).min(self.bins() - 1);
        self.counts[k] += 1;
        Ok(())
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) -> Result<()> {
        values.into_iter().try_for_each(|v| self.add(v))
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.bins() != other.bins() || self.lo != other.lo || self.hi != other.hi {
            return Err(invalid("histogram", "cannot merge histograms with different binning"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Lowest bin among those with maximal count, `None` if empty.
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }

    pub fn mode_bin_center(&self) -> Option<f64> {
        self.mode_bin().map(|k| self.center(k))
    }
}

pub fn accumulate_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if values.is_empty() {
        return Err(invalid("values", "no samples to histogram"));
    }
    let mut h = Histogram::new(bins, lo, hi)?;
    h.extend(values.iter().copied())?;
    Ok(h)
}

/// A histogram mode with its binning-stability check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mode {
    pub center: f64,
    /// Mode centers at [`STABILITY_BINS`].
    pub alternates: [f64; 2],
    /// Every alternate lies within one default-width bin of `center`.
    pub stable: bool,
}

/// Mode at `bins` bins, checked against re-binned histograms.
pub fn stable_mode(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<(Histogram, Mode)> {
    let h = accumulate_histogram(values, bins, lo, hi)?;
    let center = h.mode_bin_center().expect("nonempty histogram");
    let mut alternates = [0.0; 2];
    for (slot, b) in alternates.iter_mut().zip(STABILITY_BINS) {
        *slot = accumulate_histogram(values, b, lo, hi)?.mode_bin_center().expect("nonempty histogram");
    }
    let tol = h.width() * (1.0 + 1e-9);
    let stable = alternates.iter().all(|c| (c - center).abs() <= tol);
    Ok((h, Mode { center, alternates, stable }))
}

/// Per-parameter-point summary of a trajectory ensemble.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumSummary {
    pub trajectories: usize,
    pub saz_bar: f64,
    pub sbz_bar: f64,
    pub correlator: f64,
    pub saz_mode: Mode,
    pub sbz_mode: Mode,
    /// `None` when entropies were not recorded.
    pub entropy_mode: Option<Mode>,
    pub saz_hist: Histogram,
    pub sbz_hist: Histogram,
    pub entropy_hist: Option<Histogram>,
}

/// Window averages, connected correlator and histogram modes, all over the
/// final `window` fraction of the records.
pub fn summarize(
    records: &[TrajectoryRecord],
    s: SpinMagnitude,
    window: f64,
    bins: usize,
    kind: CorrelatorKind,
) -> Result<QuantumSummary> {
    let times = check_grid(records, 2)?;
    let start = window_start(times.len(), window)?;
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.trajectory_index);
    let gather = |f: &dyn Fn(&TrajectoryRecord) -> &Vec<f64>| -> Vec<f64> {
        sorted.iter().flat_map(|r| f(r)[start..].iter().copied()).collect()
    };
    let a = gather(&|r| &r.saz);
    let b = gather(&|r| &r.sbz);
    let (sv, ln_d) = (s.value(), (s.dim() as f64).ln());
    let (saz_hist, saz_mode) = stable_mode(&a, bins, -sv, sv)?;
    let (sbz_hist, sbz_mode) = stable_mode(&b, bins, -sv, sv)?;
    let (entropy_hist, entropy_mode) = if sorted.iter().all(|r| r.entropy.len() == times.len()) {
        let e = gather(&|r| &r.entropy);
        let (h, m) = stable_mode(&e, bins, 0.0, ln_d)?;
        (Some(h), Some(m))
    } else {
        (None, None)
    };
    Ok(QuantumSummary {
        trajectories: records.len(),
        saz_bar: a.iter().sum::<f64>() / a.len() as f64,
        sbz_bar: b.iter().sum::<f64>() / b.len() as f64,
        correlator: connected_correlator(records, window, kind)?,
        saz_mode,
        sbz_mode,
        entropy_mode,
        saz_hist,
        sbz_hist,
        entropy_hist,
    })
}
