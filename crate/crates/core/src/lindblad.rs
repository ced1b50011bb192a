//! Direct integration of the two-spin master equation
//!
//! ```text
//! dρ/dt = −i[H, ρ] + (κ/2S) Σ_L ( L ρ L† − ½{L†L, ρ} ),   L ∈ {S_A^-, S_B^+},
//! ```
//!
//! by fixed-step RK4 on the density matrix. Intended for small spins, where
//! it is the reference the trajectory engine is tested against.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{invalid, Error, Result};
use crate::sparse::CsrMatrix;
use crate::spin::{build_hamiltonian, build_operators, CMatrix, ModelParams, SpinMagnitude, SpinOperatorSet};
use crate::trajectory::PureState;

/// Largest spin accepted by [`integrate_master`].
pub const MAX_ORACLE_TWICE_S: u32 = 8;
/// Minimum eigenvalue below which integration aborts.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub spin: SpinMagnitude,
    pub dt: f64,
    pub t_end: f64,
    /// Record observables every this many steps.
    pub record_every: usize,
    /// Check positivity at every `positivity_every`-th record (0 disables).
    #[serde(default = "one")]
    pub positivity_every: usize,
}

fn one() -> usize {
    1
}

impl OracleConfig {
    pub fn new(spin: SpinMagnitude, dt: f64, t_end: f64, record_every: usize) -> Self {
        Self { spin, dt, t_end, record_every, positivity_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spin.twice() > MAX_ORACLE_TWICE_S {
            return Err(invalid("spin", format!("oracle is limited to S <= 4, got {}", self.spin)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(invalid("t_end", format!("must be >= dt, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be >= 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }
}

/// The Liouvillian in factored sparse form.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    spin: SpinMagnitude,
    h: CsrMatrix,
    /// Jump operators scaled by `sqrt(κ/2S)`.
    jumps: Vec<CsrMatrix>,
    /// `½ Σ L†L` with the rate folded in.
    half_n: CsrMatrix,
    sz_a: Vec<f64>,
    sz_b: Vec<f64>,
}

impl Liouvillian {
    /// Accepts `κ = 0` (the closed-system limit) in addition to valid
    /// model parameters.
    pub fn new(ops: &SpinOperatorSet, p: &ModelParams) -> Result<Self> {
        if p.kappa != 0.0 {
            p.validate()?;
        } else if !(p.omega.is_finite() && p.gamma.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        let h = build_hamiltonian(ops, p)?;
        let rate = C64::new((p.kappa / (2.0 * ops.spin.value())).sqrt(), 0.0);
        let la = &ops.sm_a * rate;
        let lb = &ops.sp_b * rate;
        let n = (la.adjoint() * &la + lb.adjoint() * &lb) * C64::new(0.5, 0.0);
        let csr = |m: &CMatrix| CsrMatrix::from_dense(m, 0.0);
        Ok(Self {
            spin: ops.spin,
            h: csr(&h),
            jumps: vec![csr(&la), csr(&lb)],
            half_n: csr(&n),
            sz_a: ops.sz_a_diag(),
            sz_b: ops.sz_b_diag(),
        })
    }

    pub fn spin(&self) -> SpinMagnitude {
        self.spin
    }

    /// `ρ ↦ dρ/dt`. Uses `ρX = (X† ρ†)†` so both sides reduce to sparse
    /// left products.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let rho_adj = rho.adjoint();
        let h_rho = self.h.mul_dense(rho);
        let rho_h = self.h.mul_dense(&rho_adj).adjoint();
        let mut out = (h_rho - rho_h) * C64::new(0.0, -1.0);
        out -= self.half_n.mul_dense(rho);
        out -= self.half_n.mul_dense(&rho_adj).adjoint();
        for l in &self.jumps {
            // L ρ L† = L (L ρ†)†.
            let l_rho_adj = l.mul_dense(&rho_adj);
            out += l.mul_dense(&l_rho_adj.adjoint());
        }
        out
    }

    /// `(Tr S_A^z ρ, Tr S_B^z ρ, Tr S_A^z S_B^z ρ)`.
    pub fn observables(&self, rho: &CMatrix) -> (f64, f64, f64) {
        let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
        for (i, (za, zb)) in self.sz_a.iter().zip(&self.sz_b).enumerate() {
            let p = rho[(i, i)].re;
            a += za * p;
            b += zb * p;
            ab += za * zb * p;
        }
        (a, b, ab)
    }
}

/// `dρ/dt` for the given parameters.
pub fn lindblad_rhs(rho: &DensityMatrix, ops: &SpinOperatorSet, p: &ModelParams) -> Result<CMatrix> {
    if rho.dim() != ops.product_dim() {
        return Err(Error::DimensionMismatch { expected: ops.product_dim(), found: rho.dim() });
    }
    Ok(Liouvillian::new(ops, p)?.apply(rho.entries()))
}

/// Observables on the record grid plus the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRun {
    pub times: Vec<f64>,
    pub saz: Vec<f64>,
    pub sbz: Vec<f64>,
    pub sazsbz: Vec<f64>,
    /// Smallest eigenvalue seen at any positivity check.
    pub min_eigenvalue: f64,
    /// Largest `|Tr ρ − 1|` seen at any record.
    pub max_trace_drift: f64,
    pub final_state: DensityMatrix,
}

impl OracleRun {
    /// `Tr[S_A^z S_B^z ρ] − Tr[S_A^z ρ] Tr[S_B^z ρ]` at every record.
    pub fn connected_correlator(&self) -> Vec<f64> {
        self.saz.iter().zip(&self.sbz).zip(&self.sazsbz).map(|((a, b), ab)| ab - a * b).collect()
    }
}

fn rk4(l: &Liouvillian, rho: &CMatrix, dt: f64) -> CMatrix {
    let half = C64::new(0.5 * dt, 0.0);
    let k1 = l.apply(rho);
    let k2 = l.apply(&(rho + &k1 * half));
    let k3 = l.apply(&(rho + &k2 * half));
    let k4 = l.apply(&(rho + &k3 * C64::new(dt, 0.0)));
    rho + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

/// Integrates from `rho0`, aborting if an eigenvalue drops below
/// `−POSITIVITY_TOL`.
pub fn integrate_master(rho0: &DensityMatrix, cfg: &OracleConfig, p: &ModelParams) -> Result<OracleRun> {
    cfg.validate()?;
    let ops = build_operators(cfg.spin);
    if rho0.dim() != ops.product_dim() {
        return Err(Error::DimensionMismatch { expected: ops.product_dim(), found: rho0.dim() });
    }
    let l = Liouvillian::new(&ops, p)?;
    let mut rho = rho0.entries().clone();
    let mut run = OracleRun {
        times: Vec::new(),
        saz: Vec::new(),
        sbz: Vec::new(),
        sazsbz: Vec::new(),
        min_eigenvalue: f64::INFINITY,
        max_trace_drift: 0.0,
        final_state: rho0.clone(),
    };
    let mut records = 0usize;
    let mut record = |n: u64, rho: &CMatrix, run: &mut OracleRun| -> Result<()> {
        let (a, b, ab) = l.observables(rho);
        run.times.push(n as f64 * cfg.dt);
        run.saz.push(a);
        run.sbz.push(b);
        run.sazsbz.push(ab);
        let tr: f64 = rho.diagonal().iter().map(|z| z.re).sum();
        run.max_trace_drift = run.max_trace_drift.max((tr - 1.0).abs());
        if cfg.positivity_every > 0 && records.is_multiple_of(cfg.positivity_every) {
            let min = DensityMatrix::new_unchecked(rho.clone())?.min_eigenvalue();
            run.min_eigenvalue = run.min_eigenvalue.min(min);
            if min < -POSITIVITY_TOL {
                return Err(Error::PositivityViolation { step: n, min_eigenvalue: min });
            }
        }
        records += 1;
        Ok(())
    };
    record(0, &rho, &mut run)?;
    let steps = cfg.steps();
    for n in 1..=steps {
        rho = rk4(&l, &rho, cfg.dt);
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Divergence { time: n as f64 * cfg.dt });
        }
        if n % cfg.record_every as u64 == 0 || n == steps {
            record(n, &rho, &mut run)?;
        }
    }
    run.final_state = DensityMatrix::new_unchecked(rho)?;
    Ok(run)
}

/// Starts from `|S,S⟩ ⊗ |S,S⟩`.
pub fn integrate_from_top(cfg: &OracleConfig, p: &ModelParams) -> Result<OracleRun> {
    integrate_master(&DensityMatrix::pure(&PureState::top(cfg.spin)), cfg, p)
}
