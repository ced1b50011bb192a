//! Quantum-jump unraveling of the two-spin master equation.
//!
//! Every step of length `dt` draws one uniform number `u` and, with
//!
//! ```text
//! p1 = (κ/2S) dt ⟨S_A^+ S_A^-⟩,   p2 = (κ/2S) dt ⟨S_B^- S_B^+⟩,
//! ```
//!
//! applies `S_A^-` if `u < p1`, `S_B^+` if `p1 ≤ u < p1 + p2`, and otherwise the
//! no-jump drift `exp(−iH dt) exp(−K dt)` with
//! `K = (κ/4S)(S_A^+ S_A^- + S_B^- S_B^+)`. The state is renormalized after
//! every branch.
//!
//! `K` is diagonal in the `S^z` product basis, so both jump probabilities and
//! the dissipative factor reduce to weighted sums over `|ψ_i|²`.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::observables::{entanglement_entropy, reduced_density_matrix};
use crate::rng::{task_rng, Domain, TaskRng};
use crate::sparse::CsrMatrix;
use crate::spin::{
    build_hamiltonian, build_operators, ladder_number_diagonals, unitary_propagator, CMatrix, ModelParams,
    SpinMagnitude, SpinOperatorSet,
};

/// Tolerance below zero before a jump probability counts as negative.
const NEGATIVE_PROBABILITY_TOL: f64 = 1e-12;

/// A normalized state vector on the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    pub spin: SpinMagnitude,
    pub amplitudes: Vec<C64>,
}

impl PureState {
    /// `|S,S⟩ ⊗ |S,S⟩`.
    pub fn top(spin: SpinMagnitude) -> Self {
        Self::basis(spin, 0)
    }

    pub fn basis(spin: SpinMagnitude, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); spin.product_dim()];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { spin, amplitudes }
    }

    /// Normalizes `amplitudes`, which must have length `(2S+1)²`.
    pub fn from_amplitudes(spin: SpinMagnitude, mut amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != spin.product_dim() {
            return Err(Error::DimensionMismatch { expected: spin.product_dim(), found: amplitudes.len() });
        }
        let n = norm_sqr(&amplitudes).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        amplitudes.iter_mut().for_each(|z| *z /= n);
        Ok(Self { spin, amplitudes })
    }

    /// Index of the basis state `|S, m_A⟩ ⊗ |S, m_B⟩` given single-spin indices.
    pub fn index(spin: SpinMagnitude, ia: usize, ib: usize) -> usize {
        ia * spin.dim() + ib
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    /// `⟨ψ|D|ψ⟩` for an operator diagonal in the product basis.
    pub fn diagonal_expectation(&self, diag: &[f64]) -> f64 {
        weighted_norm(&self.amplitudes, diag)
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn weighted_norm(v: &[C64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(z, w)| z.norm_sqr() * w).sum()
}

/// `(p1, p2)` computed from the `S^z` expectations of `psi`.
pub fn jump_probabilities(psi: &PureState, ops: &SpinOperatorSet, p: &ModelParams, dt: f64) -> Result<(f64, f64)> {
    let s = ops.spin;
    if psi.amplitudes.len() != s.product_dim() {
        return Err(Error::DimensionMismatch { expected: s.product_dim(), found: psi.amplitudes.len() });
    }
    let za = ops.sz_a_diag();
    let zb = ops.sz_b_diag();
    let c = s.casimir();
    let (mut ea, mut eb) = (0.0, 0.0);
    for ((z, a), b) in psi.amplitudes.iter().zip(&za).zip(&zb) {
        let w = z.norm_sqr();
        ea += w * (a - a * a);
        eb += w * (b + b * b);
    }
    let pref = p.kappa / (2.0 * s.value()) * dt;
    check_probabilities(pref * (c + ea), pref * (c - eb))
}

fn check_probabilities(p1: f64, p2: f64) -> Result<(f64, f64)> {
    if p1 < -NEGATIVE_PROBABILITY_TOL || p2 < -NEGATIVE_PROBABILITY_TOL {
        return Err(Error::NegativeProbability { p1, p2 });
    }
    Ok((p1.max(0.0), p2.max(0.0)))
}

/// How the no-jump unitary factor `exp(−iH dt)` is applied.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    /// Dense below [`DENSE_PROPAGATOR_MAX_DIM`], Taylor series above.
    #[default]
    Auto,
    /// Precomputed dense `exp(−iH dt) exp(−K dt)`.
    Dense,
    /// Truncated Taylor series of `exp(−iH dt)` on the sparse Hamiltonian,
    /// with the term count fixed so the remainder is below 1e-15.
    Taylor,
}

/// Largest product dimension for which [`PropagatorKind::Auto`] precomputes
/// a dense drift matrix.
pub const DENSE_PROPAGATOR_MAX_DIM: usize = 36;

#[derive(Clone, Debug)]
enum Drift {
    Dense(CMatrix),
    Taylor { h: CsrMatrix, terms: usize },
}

/// Which branch a step took.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Branch {
    JumpA,
    JumpB,
    Drift,
}

/// Precomputed per-parameter-point data shared read-only by all trajectories.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine {
    spin: SpinMagnitude,
    params: ModelParams,
    dt: f64,
    /// Diagonal of `S_A^+ S_A^-`.
    rate_a: Vec<f64>,
    /// Diagonal of `S_B^- S_B^+`.
    rate_b: Vec<f64>,
    sz_a: Vec<f64>,
    sz_b: Vec<f64>,
    /// `exp(−K_ii dt)`.
    decay: Vec<f64>,
    /// `S^-` coefficient from single-spin index `i` to `i + 1`.
    lower: Vec<f64>,
    /// `S^+` coefficient from single-spin index `i` to `i − 1`.
    raise: Vec<f64>,
    drift: Drift,
}

/// Scratch buffers reused across steps.
#[derive(Clone, Debug)]
pub struct Workspace {
    a: Vec<C64>,
    b: Vec<C64>,
    c: Vec<C64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self { a: z.clone(), b: z.clone(), c: z }
    }
}

impl TrajectoryEngine {
    pub fn new(spin: SpinMagnitude, params: ModelParams, dt: f64, kind: PropagatorKind) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        let ops = build_operators(spin);
        Self::from_operators(&ops, params, dt, kind)
    }

    pub fn from_operators(ops: &SpinOperatorSet, params: ModelParams, dt: f64, kind: PropagatorKind) -> Result<Self> {
        let spin = ops.spin;
        let d = spin.dim();
        let (rate_a, rate_b) = ladder_number_diagonals(spin);
        let k_pref = params.kappa / (4.0 * spin.value());
        let decay: Vec<f64> = rate_a.iter().zip(&rate_b).map(|(a, b)| (-(k_pref * (a + b)) * dt).exp()).collect();
        let sv = spin.value();
        let lower = (0..d)
            .map(|i| {
                let m = spin.m(i);
                if i + 1 < d { (sv * (sv + 1.0) - m * (m - 1.0)).sqrt() } else { 0.0 }
            })
            .collect();
        let raise = (0..d)
            .map(|i| {
                let m = spin.m(i);
                if i > 0 { (sv * (sv + 1.0) - m * (m + 1.0)).sqrt() } else { 0.0 }
            })
            .collect();
        let h = build_hamiltonian(ops, &params)?;
        let dense = match kind {
            PropagatorKind::Auto => spin.product_dim() <= DENSE_PROPAGATOR_MAX_DIM,
            PropagatorKind::Dense => true,
            PropagatorKind::Taylor => false,
        };
        let drift = if dense {
            let mut u = unitary_propagator(&h, dt)?;
            for (j, f) in decay.iter().enumerate() {
                u.column_mut(j).iter_mut().for_each(|z| *z *= f);
            }
            Drift::Dense(u)
        } else {
            let csr = CsrMatrix::from_dense(&h, 0.0);
            let terms = taylor_terms(csr.norm_bound() * dt);
            Drift::Taylor { h: csr, terms }
        };
        Ok(Self {
            spin,
            params,
            dt,
            rate_a,
            rate_b,
            sz_a: ops.sz_a_diag(),
            sz_b: ops.sz_b_diag(),
            decay,
            lower,
            raise,
            drift,
        })
    }

    pub fn spin(&self) -> SpinMagnitude {
        self.spin
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.spin.product_dim()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.drift, Drift::Dense(_))
    }

    pub fn sz_a(&self) -> &[f64] {
        &self.sz_a
    }

    pub fn sz_b(&self) -> &[f64] {
        &self.sz_b
    }

    /// `(p1, p2)` for `amps`, which must be normalized.
    pub fn probabilities(&self, amps: &[C64]) -> Result<(f64, f64)> {
        let pref = self.params.kappa / (2.0 * self.spin.value()) * self.dt;
        let (mut ea, mut eb) = (0.0, 0.0);
        for ((z, a), b) in amps.iter().zip(&self.rate_a).zip(&self.rate_b) {
            let w = z.norm_sqr();
            ea += w * a;
            eb += w * b;
        }
        check_probabilities(pref * ea, pref * eb)
    }

    /// Applies the unnormalized drift `exp(−iH dt) exp(−K dt)` to `amps`.
    pub fn apply_drift(&self, amps: &mut [C64], ws: &mut Workspace) {
        match &self.drift {
            Drift::Dense(u) => {
                let n = amps.len();
                let out = &mut ws.a;
                out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                // Column-major: accumulate column j scaled by amps[j].
                for (j, x) in amps.iter().enumerate() {
                    if *x == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let col = &u.as_slice()[j * n..(j + 1) * n];
                    for (o, c) in out.iter_mut().zip(col) {
                        *o += c * x;
                    }
                }
                amps.copy_from_slice(out);
            }
            Drift::Taylor { h, terms } => {
                for (z, f) in amps.iter_mut().zip(&self.decay) {
                    *z *= f;
                }
                let term = &mut ws.a;
                let next = &mut ws.b;
                term.copy_from_slice(amps);
                for k in 1..=*terms {
                    h.apply(term, next);
                    let scale = C64::new(0.0, -self.dt / k as f64);
                    for (t, nx) in term.iter_mut().zip(next.iter()) {
                        *t = nx * scale;
                    }
                    for (a, t) in amps.iter_mut().zip(term.iter()) {
                        *a += t;
                    }
                }
            }
        }
    }

    fn jump_a(&self, amps: &mut [C64], ws: &mut Workspace) {
        let d = self.spin.dim();
        let out = &mut ws.c;
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for ia in 0..d - 1 {
            let c = self.lower[ia];
            for ib in 0..d {
                out[(ia + 1) * d + ib] = amps[ia * d + ib] * c;
            }
        }
        amps.copy_from_slice(out);
    }

    fn jump_b(&self, amps: &mut [C64], ws: &mut Workspace) {
        let d = self.spin.dim();
        let out = &mut ws.c;
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for ia in 0..d {
            for ib in 1..d {
                out[ia * d + ib - 1] = amps[ia * d + ib] * self.raise[ib];
            }
        }
        amps.copy_from_slice(out);
    }

    /// Advances `psi` by one step using the uniform draw `u ∈ [0, 1)`.
    pub fn step(&self, psi: &mut PureState, u: f64, ws: &mut Workspace) -> Result<Branch> {
        let amps = &mut psi.amplitudes;
        let (p1, p2) = self.probabilities(amps)?;
        if p1 + p2 >= 1.0 {
            return Err(Error::StepTooCoarse { total: p1 + p2, dt: self.dt });
        }
        let branch = if u < p1 {
            self.jump_a(amps, ws);
            Branch::JumpA
        } else if u < p1 + p2 {
            self.jump_b(amps, ws);
            Branch::JumpB
        } else {
            self.apply_drift(amps, ws);
            Branch::Drift
        };
        let n = norm_sqr(amps).sqrt();
        if !n.is_finite() {
            return Err(Error::NonFinite("trajectory state"));
        }
        if n < 1e-150 {
            return Err(Error::AnnihilatedJump { step: 0 });
        }
        let inv = 1.0 / n;
        amps.iter_mut().for_each(|z| *z *= inv);
        Ok(branch)
    }

    /// Runs one trajectory from `|S,S⟩ ⊗ |S,S⟩`.
    pub fn run(&self, cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
        self.run_from(PureState::top(self.spin), cfg)
    }

    pub fn run_from(&self, mut psi: PureState, cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
        cfg.validate(self.dt)?;
        if psi.spin != self.spin {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: psi.amplitudes.len() });
        }
        let steps = cfg.steps(self.dt);
        let snapshot_steps: Vec<u64> = cfg.snapshot_times.iter().map(|t| (t / self.dt).round() as u64).collect();
        let mut rng: TaskRng = task_rng(cfg.seed, Domain::Trajectory, cfg.trajectory_index);
        let mut ws = Workspace::new(self.dim());
        let mut rec = TrajectoryRecord::empty(cfg.trajectory_index);
        let wrap = |step: u64, e: Error| Error::Trajectory {
            trajectory: cfg.trajectory_index,
            step,
            source: Box::new(match e {
                Error::AnnihilatedJump { .. } => Error::AnnihilatedJump { step },
                other => other,
            }),
        };
        self.record(&psi, 0, cfg, &mut rec).map_err(|e| wrap(0, e))?;
        self.snapshot(&psi, 0, &snapshot_steps, &mut rec);
        for n in 1..=steps {
            let u: f64 = rng.random();
            self.step(&mut psi, u, &mut ws).map_err(|e| wrap(n, e))?;
            if n % cfg.record_every as u64 == 0 {
                self.record(&psi, n, cfg, &mut rec).map_err(|e| wrap(n, e))?;
            }
            self.snapshot(&psi, n, &snapshot_steps, &mut rec);
        }
        Ok(rec)
    }

    fn record(&self, psi: &PureState, n: u64, cfg: &TrajectoryConfig, rec: &mut TrajectoryRecord) -> Result<()> {
        let (mut za, mut zb, mut zz) = (0.0, 0.0, 0.0);
        for ((z, a), b) in psi.amplitudes.iter().zip(&self.sz_a).zip(&self.sz_b) {
            let w = z.norm_sqr();
            za += w * a;
            zb += w * b;
            zz += w * a * b;
        }
        rec.times.push(n as f64 * self.dt);
        rec.saz.push(za);
        rec.sbz.push(zb);
        rec.sazsbz.push(zz);
        if cfg.record_entropy {
            let rho_a = reduced_density_matrix(psi);
            rec.entropy.push(entanglement_entropy(&rho_a)?);
        }
        Ok(())
    }

    fn snapshot(&self, psi: &PureState, n: u64, snapshot_steps: &[u64], rec: &mut TrajectoryRecord) {
        for (k, s) in snapshot_steps.iter().enumerate() {
            if *s == n {
                rec.snapshots.push(Snapshot {
                    trajectory_index: rec.trajectory_index,
                    time: n as f64 * self.dt,
                    slot: k,
                    state: psi.clone(),
                });
            }
        }
    }

    /// Runs trajectories `first .. first + count` in parallel; the output is
    /// ordered by trajectory index.
    pub fn run_many(&self, base: &TrajectoryConfig, first: u64, count: u64) -> Result<Vec<TrajectoryRecord>> {
        (first..first + count)
            .into_par_iter()
            .map(|r| {
                let cfg = TrajectoryConfig { trajectory_index: r, ..base.clone() };
                self.run(&cfg)
            })
            .collect()
    }

    /// `‖exp(−iH dt) exp(−K dt) ψ‖²`, the no-jump survival probability.
    pub fn drift_survival(&self, psi: &PureState) -> f64 {
        let mut v = psi.amplitudes.clone();
        let mut ws = Workspace::new(self.dim());
        self.apply_drift(&mut v, &mut ws);
        norm_sqr(&v)
    }

    /// The dense drift matrix, materialized column by column if necessary.
    pub fn drift_matrix(&self) -> CMatrix {
        let n = self.dim();
        match &self.drift {
            Drift::Dense(u) => u.clone(),
            Drift::Taylor { .. } => {
                let mut m = CMatrix::zeros(n, n);
                let mut ws = Workspace::new(n);
                for j in 0..n {
                    let mut e = vec![C64::new(0.0, 0.0); n];
                    e[j] = C64::new(1.0, 0.0);
                    self.apply_drift(&mut e, &mut ws);
                    m.set_column(j, &DVector::from_vec(e));
                }
                m
            }
        }
    }
}

/// Smallest `K` with `x^(K+1) / (K+1)! < 1e-16`, at least 2.
fn taylor_terms(x: f64) -> usize {
    let mut term = 1.0;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= x / k as f64;
        if k >= 2 && term * x / ((k + 1) as f64) < 1e-16 {
            return k;
        }
        if k > 200 {
            return k;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Step `δt` (must match the engine's).
    pub dt: f64,
    /// Horizon.
    pub t_end: f64,
    /// Record observables every this many steps.
    pub record_every: usize,
    pub seed: u64,
    pub trajectory_index: u64,
    /// Compute the entanglement entropy at each record.
    #[serde(default = "yes")]
    pub record_entropy: bool,
    /// Times at which to keep the full state.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn yes() -> bool {
    true
}

impl TrajectoryConfig {
    pub fn new(dt: f64, t_end: f64, record_every: usize, seed: u64) -> Self {
        Self { dt, t_end, record_every, seed, trajectory_index: 0, record_entropy: true, snapshot_times: Vec::new() }
    }

    pub fn steps(&self, dt: f64) -> u64 {
        (self.t_end / dt).round() as u64
    }

    pub fn validate(&self, engine_dt: f64) -> Result<()> {
        if (self.dt - engine_dt).abs() > 1e-15 * engine_dt.max(1.0) {
            return Err(invalid("dt", format!("config dt {} differs from engine dt {engine_dt}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(invalid("t_end", format!("must be >= dt, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be >= 1"));
        }
        for t in &self.snapshot_times {
            if !(*t >= 0.0 && *t <= self.t_end + 0.5 * self.dt) {
                return Err(invalid("snapshot_times", format!("{t} outside [0, {}]", self.t_end)));
            }
        }
        Ok(())
    }
}

/// A full state kept at a designated time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub trajectory_index: u64,
    pub time: f64,
    /// Position in the requested snapshot-time list.
    pub slot: usize,
    pub state: PureState,
}

/// Observables along one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_index: u64,
    pub times: Vec<f64>,
    pub saz: Vec<f64>,
    pub sbz: Vec<f64>,
    pub sazsbz: Vec<f64>,
    /// Empty when entropy recording is off.
    pub entropy: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRecord {
    fn empty(trajectory_index: u64) -> Self {
        Self {
            trajectory_index,
            times: Vec::new(),
            saz: Vec::new(),
            sbz: Vec::new(),
            sazsbz: Vec::new(),
            entropy: Vec::new(),
            snapshots: Vec::new(),
        }
    }
}

/// Convenience: builds an engine and runs one trajectory.
pub fn run_trajectory(cfg: &TrajectoryConfig, p: &ModelParams, s: SpinMagnitude) -> Result<TrajectoryRecord> {
    TrajectoryEngine::new(s, *p, cfg.dt, PropagatorKind::Auto)?.run(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_operators, dissipator_diagonal, matrix_exponential};

    fn random_state(spin: SpinMagnitude, seed: u64) -> PureState {
        let mut rng = task_rng(seed, Domain::Test, 0);
        let amps = (0..spin.product_dim())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        PureState::from_amplitudes(spin, amps).unwrap()
    }

    #[test]
    fn probabilities_on_extreme_states() {
        for two_s in [1, 2, 10, 40] {
            let s = SpinMagnitude::from_twice(two_s).unwrap();
            let ops = build_operators(s);
            let p = ModelParams::new(0.7, 1.1);
            let dt = 1e-4;
            let (p1, p2) = jump_probabilities(&PureState::top(s), &ops, &p, dt).unwrap();
            assert!((p1 - dt).abs() < 1e-12 * dt.max(1.0));
            assert!(p2.abs() < 1e-12);
            let bottom = PureState::basis(s, s.product_dim() - 1);
            let (p1, p2) = jump_probabilities(&bottom, &ops, &p, dt).unwrap();
            assert!(p1.abs() < 1e-12);
            assert!((p2 - dt).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_match_ladder_products() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let ops = build_operators(s);
        let p = ModelParams::new(0.5, 0.5).with_kappa(1.3);
        let dt = 1e-3;
        for seed in 0..5 {
            let psi = random_state(s, seed);
            let (p1, p2) = jump_probabilities(&psi, &ops, &p, dt).unwrap();
            let v = DVector::from_vec(psi.amplitudes.clone());
            let pa = (v.adjoint() * (&ops.sp_a * &ops.sm_a) * &v)[(0, 0)].re;
            let pb = (v.adjoint() * (&ops.sm_b * &ops.sp_b) * &v)[(0, 0)].re;
            let pref = p.kappa / (2.0 * s.value());
            assert!((p1 / dt - pref * pa).abs() < 1e-10);
            assert!((p2 / dt - pref * pb).abs() < 1e-10);
            let engine = TrajectoryEngine::new(s, p, dt, PropagatorKind::Auto).unwrap();
            let (q1, q2) = engine.probabilities(&psi.amplitudes).unwrap();
            assert!((q1 - p1).abs() < 1e-15 && (q2 - p2).abs() < 1e-15);
        }
    }

    #[test]
    fn jump_from_top_state() {
        let s = SpinMagnitude::new(1.5).unwrap();
        let engine = TrajectoryEngine::new(s, ModelParams::new(1.0, 1.0), 1e-3, PropagatorKind::Auto).unwrap();
        let mut psi = PureState::top(s);
        let mut ws = Workspace::new(engine.dim());
        assert_eq!(engine.step(&mut psi, 0.0, &mut ws).unwrap(), Branch::JumpA);
        let expect = PureState::basis(s, PureState::index(s, 1, 0));
        for (a, b) in psi.amplitudes.iter().zip(&expect.amplitudes) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn no_jumps_from_dark_product_state() {
        let s = SpinMagnitude::new(2.0).unwrap();
        let engine = TrajectoryEngine::new(s, ModelParams::new(0.5, 0.5), 1e-3, PropagatorKind::Auto).unwrap();
        let psi = PureState::basis(s, PureState::index(s, s.dim() - 1, 0));
        let (p1, p2) = engine.probabilities(&psi.amplitudes).unwrap();
        assert_eq!((p1, p2), (0.0, 0.0));
        let mut ws = Workspace::new(engine.dim());
        let mut q = psi.clone();
        assert_eq!(engine.step(&mut q, 0.0, &mut ws).unwrap(), Branch::Drift);
    }

    #[test]
    fn coarse_step_rejected() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let engine = TrajectoryEngine::new(s, ModelParams::new(0.5, 0.5), 2.0, PropagatorKind::Auto).unwrap();
        let mut psi = PureState::top(s);
        let mut ws = Workspace::new(engine.dim());
        assert!(matches!(engine.step(&mut psi, 0.5, &mut ws), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn dense_and_taylor_drifts_agree() {
        for two_s in [2, 5, 8] {
            let s = SpinMagnitude::from_twice(two_s).unwrap();
            let p = ModelParams::new(0.6, 1.4);
            let dense = TrajectoryEngine::new(s, p, 1e-3, PropagatorKind::Dense).unwrap();
            let taylor = TrajectoryEngine::new(s, p, 1e-3, PropagatorKind::Taylor).unwrap();
            assert!(dense.is_dense() && !taylor.is_dense());
            let diff = (dense.drift_matrix() - taylor.drift_matrix()).norm();
            assert!(diff < 1e-12, "2S = {two_s}: {diff}");
        }
    }

    #[test]
    fn drift_matches_matrix_exponentials() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let p = ModelParams::new(0.8, 0.3);
        let dt = 0.01;
        let ops = build_operators(s);
        let h = build_hamiltonian(&ops, &p).unwrap();
        let u = matrix_exponential(&(&h * C64::new(0.0, -1.0)), dt).unwrap();
        let k = CMatrix::from_diagonal(&DVector::from_vec(
            dissipator_diagonal(s, p.kappa).into_iter().map(|x| C64::new(-x, 0.0)).collect(),
        ));
        let expect = u * matrix_exponential(&k, dt).unwrap();
        let engine = TrajectoryEngine::new(s, p, dt, PropagatorKind::Auto).unwrap();
        assert!((engine.drift_matrix() - expect).norm() < 1e-10);
    }

    #[test]
    fn survival_matches_jump_probabilities_to_first_order() {
        let dt = 1e-3;
        for two_s in [1, 2, 4] {
            let s = SpinMagnitude::from_twice(two_s).unwrap();
            let engine = TrajectoryEngine::new(s, ModelParams::new(0.9, 0.7), dt, PropagatorKind::Auto).unwrap();
            for seed in 0..4 {
                let psi = random_state(s, seed);
                let (p1, p2) = engine.probabilities(&psi.amplitudes).unwrap();
                let survival = engine.drift_survival(&psi);
                assert!(((1.0 - p1 - p2) - survival).abs() < 10.0 * dt * dt);
            }
        }
    }

    #[test]
    fn trajectory_invariants_and_reproducibility() {
        let s = SpinMagnitude::new(1.5).unwrap();
        let p = ModelParams::new(0.5, 0.8);
        let engine = TrajectoryEngine::new(s, p, 1e-3, PropagatorKind::Auto).unwrap();
        let mut cfg = TrajectoryConfig::new(1e-3, 5.0, 50, 77);
        cfg.trajectory_index = 3;
        cfg.snapshot_times = vec![2.5, 5.0];
        let a = engine.run(&cfg).unwrap();
        let b = engine.run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 101);
        assert_eq!(a.snapshots.len(), 2);
        for snap in &a.snapshots {
            assert!((snap.state.norm() - 1.0).abs() < 1e-9);
        }
        let sv = s.value();
        for k in 0..a.times.len() {
            assert!((a.saz[k].abs() <= sv + 1e-12) && (a.sbz[k].abs() <= sv + 1e-12));
            assert!(a.entropy[k] >= -1e-12 && a.entropy[k] <= (s.dim() as f64).ln() + 1e-12);
        }
        cfg.trajectory_index = 4;
        assert_ne!(engine.run(&cfg).unwrap().saz, a.saz);
    }

    #[test]
    fn norm_is_restored_every_step() {
        let s = SpinMagnitude::new(2.0).unwrap();
        let engine = TrajectoryEngine::new(s, ModelParams::new(0.5, 1.0), 1e-3, PropagatorKind::Taylor).unwrap();
        let mut psi = PureState::top(s);
        let mut ws = Workspace::new(engine.dim());
        let mut rng = task_rng(2, Domain::Test, 0);
        for _ in 0..2000 {
            engine.step(&mut psi, rng.random(), &mut ws).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let engine = TrajectoryEngine::new(s, ModelParams::new(0.5, 0.5), 1e-3, PropagatorKind::Auto).unwrap();
        assert!(engine.run(&TrajectoryConfig::new(2e-3, 1.0, 1, 0)).is_err());
        assert!(engine.run(&TrajectoryConfig::new(1e-3, 1.0, 0, 0)).is_err());
        let mut cfg = TrajectoryConfig::new(1e-3, 1.0, 1, 0);
        cfg.snapshot_times = vec![2.0];
        assert!(engine.run(&cfg).is_err());
        assert!(TrajectoryEngine::new(s, ModelParams::new(0.5, 0.5), 0.0, PropagatorKind::Auto).is_err());
    }

    #[test]
    fn taylor_term_count() {
        assert!(taylor_terms(1e-3) >= 2);
        let k = taylor_terms(0.5);
        let mut rem = 1.0;
        for i in 1..=k + 1 {
            rem *= 0.5 / i as f64;
        }
        assert!(rem < 1e-16);
    }
}
