//! Density matrices on a single spin or on the product space.

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spin::CMatrix;
use crate::trajectory::PureState;

/// Tolerances for [`DensityMatrix::new`].
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// A Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(entries)?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min = rho.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!("minimum eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// Checks shape, finiteness and Hermiticity only, then symmetrizes.
    pub fn new_unchecked(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidDensityMatrix(format!("shape {}x{}", entries.nrows(), entries.ncols())));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix"));
        }
        let dev = hermiticity_defect(&entries);
        if dev > HERMITICITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!("anti-Hermitian part {dev:e}")));
        }
        let entries = (&entries + entries.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { entries })
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn pure(psi: &PureState) -> Self {
        let v = DVector::from_column_slice(&psi.amplitudes);
        Self { entries: &v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `Tr[D ρ]` for an operator diagonal in the basis.
    pub fn diagonal_expectation(&self, diag: &[f64]) -> f64 {
        self.entries.diagonal().iter().zip(diag).map(|(z, d)| z.re * d).sum()
    }

    /// `½ ‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let diff = &self.entries - &other.entries;
        Ok(0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
    }
}

/// `max |A − A†|` over entries.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}
