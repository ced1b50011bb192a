//! Trajectory-averaged late-time density matrix and its level-spacing ratio.
//!
//! For ascending eigenvalues `ρ_1 ≤ … ≤ ρ_D` with gaps `g_α = ρ_{α+1} − ρ_α`,
//!
//! ```text
//! r = mean_α  min(g_α, g_{α+1}) / max(g_α, g_{α+1})
//! ```
//!
//! over all `D − 2` consecutive gap pairs. Uncorrelated (Poisson) levels give
//! `2 ln 2 − 1 ≈ 0.386`, GUE levels `≈ 0.5996`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::density::DensityMatrix;
use crate::error::{invalid, Error, Result};
use crate::spin::CMatrix;
use crate::trajectory::Snapshot;

/// Gap pairs whose larger gap is below this are skipped.
pub const DEGENERATE_GAP: f64 = 1e-16;
/// Large-`D` GUE value of the mean spacing ratio.
pub const R_GUE: f64 = 0.5996;
/// `2 ln 2 − 1`, the Poisson value.
pub const R_POISSON: f64 = 0.386_294_361_119_890_6;

/// `(1/N) Σ_r |ψ_r⟩⟨ψ_r|` over snapshots taken at one time.
///
/// Snapshots are summed in trajectory-index order with compensated
/// summation, so the result does not depend on the order they arrive in.
pub fn accumulate_ness(snapshots: &[Snapshot]) -> Result<DensityMatrix> {
    let first = snapshots.first().ok_or_else(|| invalid("snapshots", "no snapshots to accumulate"))?;
    let n = first.state.amplitudes.len();
    let t0 = first.time;
    for s in snapshots {
        if (s.time - t0).abs() > 1e-12 * t0.abs().max(1.0) {
            return Err(Error::MixedSnapshotTimes(t0, s.time));
        }
        if s.state.amplitudes.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: s.state.amplitudes.len() });
        }
    }
    let mut order: Vec<&Snapshot> = snapshots.iter().collect();
    order.sort_by_key(|s| s.trajectory_index);
    if let Some(w) = order.windows(2).find(|w| w[0].trajectory_index == w[1].trajectory_index) {
        return Err(invalid("snapshots", format!("trajectory {} appears twice", w[0].trajectory_index)));
    }
    let mut sum = vec![C64::new(0.0, 0.0); n * n];
    let mut comp = vec![C64::new(0.0, 0.0); n * n];
    for s in order {
        let psi = &s.state.amplitudes;
        for j in 0..n {
            let cj = psi[j].conj();
            for i in 0..n {
                let k = j * n + i;
                let y = psi[i] * cj - comp[k];
                let t = sum[k] + y;
                comp[k] = (t - sum[k]) - y;
                sum[k] = t;
            }
        }
    }
    let inv = 1.0 / snapshots.len() as f64;
    DensityMatrix::new(CMatrix::from_vec(n, n, sum) * C64::new(inv, 0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpacingRatio {
    pub r: f64,
    /// Ratio terms that entered the mean.
    pub count: usize,
    /// Gap pairs skipped as degenerate.
    pub skipped: usize,
}

/// Mean spacing ratio of a spectrum (any order).
pub fn spacing_ratio(eigenvalues: &[f64]) -> Result<SpacingRatio> {
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spectrum"));
    }
    let mut ev = eigenvalues.to_vec();
    ev.sort_by(f64::total_cmp);
    let distinct = 1 + ev.windows(2).filter(|w| w[1] - w[0] > DEGENERATE_GAP).count();
    if ev.is_empty() || distinct < 3 {
        return Err(Error::DegenerateSpectrum(format!("{distinct} distinct eigenvalues, need at least 3")));
    }
    let gaps: Vec<f64> = ev.windows(2).map(|w| w[1] - w[0]).collect();
    let (mut sum, mut count, mut skipped) = (0.0, 0usize, 0usize);
    for g in gaps.windows(2) {
        let (lo, hi) = if g[0] <= g[1] { (g[0], g[1]) } else { (g[1], g[0]) };
        if hi < DEGENERATE_GAP {
            skipped += 1;
            continue;
        }
        sum += lo / hi;
        count += 1;
    }
    Ok(SpacingRatio { r: sum / count as f64, count, skipped })
}

pub fn level_spacing_ratio(rho: &DensityMatrix) -> Result<SpacingRatio> {
    spacing_ratio(&rho.eigenvalues())
}
