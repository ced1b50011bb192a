//! Collective spin operators on the two-subsystem product space.
//!
//! Basis states are `|S, m_A⟩ ⊗ |S, m_B⟩` with each `m` running from `+S`
//! down to `−S`. The flat index of `(i_A, i_B)` is `i_A · (2S+1) + i_B`, so the
//! fully polarized state `|S,S⟩⊗|S,S⟩` sits at index 0.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type CMatrix = DMatrix<C64>;

/// Spin magnitude `S`, stored as the integer `2S`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinMagnitude {
    twice: u32,
}

impl SpinMagnitude {
    /// Creates `S = two_s / 2`.
    pub fn from_twice(two_s: u32) -> Result<Self> {
        if two_s == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        Ok(Self { twice: two_s })
    }

    /// Creates a spin magnitude from its value, rejecting anything that is not
    /// a positive multiple of one half.
    pub fn new(s: f64) -> Result<Self> {
        let two_s = 2.0 * s;
        if !two_s.is_finite() || two_s < 1.0 || (two_s - two_s.round()).abs() > 1e-12 {
            return Err(Error::InvalidSpin(s));
        }
        Self::from_twice(two_s.round() as u32)
    }

    pub fn twice(self) -> u32 {
        self.twice
    }

    pub fn value(self) -> f64 {
        f64::from(self.twice) / 2.0
    }

    /// Single-subsystem dimension `2S + 1`.
    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    /// Product-space dimension `(2S + 1)²`.
    pub fn product_dim(self) -> usize {
        self.dim() * self.dim()
    }

    /// Magnetic quantum number of single-spin basis index `i`.
    pub fn m(self, i: usize) -> f64 {
        self.value() - i as f64
    }

    /// `S(S+1)`.
    pub fn casimir(self) -> f64 {
        let s = self.value();
        s * (s + 1.0)
    }
}

impl std::fmt::Display for SpinMagnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.twice.is_multiple_of(2) {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

impl Serialize for SpinMagnitude {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        ser.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for SpinMagnitude {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = f64::deserialize(de)?;
        SpinMagnitude::new(s).map_err(serde::de::Error::custom)
    }
}

/// Drive, coupling, and dissipation rates, all in units of `κ` by default.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub gamma: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl ModelParams {
    /// Parameters with `κ = 1`.
    pub fn new(omega: f64, gamma: f64) -> Self {
        Self { omega, gamma, kappa: 1.0 }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Checks `Ω, Γ ≥ 0` and `κ > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(invalid("omega", format!("must be finite and >= 0, got {}", self.omega)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(invalid("kappa", format!("must be finite and > 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Single-spin matrices `(S^x, S^y, S^z, S^+, S^-)` of size `(2S+1)²`.
pub fn single_spin_operators(s: SpinMagnitude) -> [CMatrix; 5] {
    let d = s.dim();
    let sv = s.value();
    let mut sz = CMatrix::zeros(d, d);
    let mut sp = CMatrix::zeros(d, d);
    for i in 0..d {
        let m = s.m(i);
        sz[(i, i)] = C64::new(m, 0.0);
        // S^+ |m⟩ = sqrt(S(S+1) - m(m+1)) |m+1⟩, and |m+1⟩ has index i-1.
        if i > 0 {
            sp[(i - 1, i)] = C64::new((sv * (sv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let sm = sp.adjoint();
    let half = C64::new(0.5, 0.0);
    let sx = (&sp + &sm) * half;
    let sy = (&sp - &sm) * C64::new(0.0, -0.5);
    [sx, sy, sz, sp, sm]
}

/// The ten collective spin operators embedded in the product space.
#[derive(Clone, Debug)]
pub struct SpinOperatorSet {
    pub spin: SpinMagnitude,
    pub sx_a: CMatrix,
    pub sy_a: CMatrix,
    pub sz_a: CMatrix,
    pub sp_a: CMatrix,
    pub sm_a: CMatrix,
    pub sx_b: CMatrix,
    pub sy_b: CMatrix,
    pub sz_b: CMatrix,
    pub sp_b: CMatrix,
    pub sm_b: CMatrix,
}

/// Builds `S_j^{x,y,z,±}` for both subsystems; `A` acts on the first tensor
/// factor and `B` on the second.
pub fn build_operators(s: SpinMagnitude) -> SpinOperatorSet {
    let id = CMatrix::identity(s.dim(), s.dim());
    let single = single_spin_operators(s);
    let on_a = |op: &CMatrix| op.kronecker(&id);
    let on_b = |op: &CMatrix| id.kronecker(op);
    let [sx, sy, sz, sp, sm] = &single;
    SpinOperatorSet {
        spin: s,
        sx_a: on_a(sx),
        sy_a: on_a(sy),
        sz_a: on_a(sz),
        sp_a: on_a(sp),
        sm_a: on_a(sm),
        sx_b: on_b(sx),
        sy_b: on_b(sy),
        sz_b: on_b(sz),
        sp_b: on_b(sp),
        sm_b: on_b(sm),
    }
}

impl SpinOperatorSet {
    pub fn product_dim(&self) -> usize {
        self.spin.product_dim()
    }

    /// Diagonal of `S_A^z` in the product basis.
    pub fn sz_a_diag(&self) -> Vec<f64> {
        self.sz_a.diagonal().iter().map(|z| z.re).collect()
    }

    /// Diagonal of `S_B^z` in the product basis.
    pub fn sz_b_diag(&self) -> Vec<f64> {
        self.sz_b.diagonal().iter().map(|z| z.re).collect()
    }
}

/// `H = Ω S_A^x + Ω S_B^x + (Γ/2S)(S_A^+ S_B^- + S_A^- S_B^+)`.
pub fn build_hamiltonian(ops: &SpinOperatorSet, p: &ModelParams) -> Result<CMatrix> {
    let n = ops.product_dim();
    for m in [&ops.sx_a, &ops.sx_b, &ops.sp_a, &ops.sm_a, &ops.sp_b, &ops.sm_b] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
        }
    }
    let omega = C64::new(p.omega, 0.0);
    let g = C64::new(p.gamma / (2.0 * ops.spin.value()), 0.0);
    let mut h = (&ops.sx_a + &ops.sx_b) * omega;
    if p.gamma != 0.0 {
        // (S^+ ⊗ 1)(1 ⊗ S^-) = S^+ ⊗ S^-, which avoids dense products at large S.
        let [_, _, _, sp, sm] = single_spin_operators(ops.spin);
        h += (sp.kronecker(&sm) + sm.kronecker(&sp)) * g;
    }
    Ok(h)
}

/// Diagonal of the dissipative drift generator
/// `K = (κ/4S)(S_A^+ S_A^- + S_B^- S_B^+)`, using
/// `S_A^+ S_A^- = S(S+1) + S_A^z − (S_A^z)²` and
/// `S_B^- S_B^+ = S(S+1) − S_B^z − (S_B^z)²` on the fixed-`S` subspace.
pub fn dissipator_diagonal(s: SpinMagnitude, kappa: f64) -> Vec<f64> {
    let (rate_a, rate_b) = ladder_number_diagonals(s);
    let pref = kappa / (4.0 * s.value());
    rate_a.iter().zip(&rate_b).map(|(a, b)| pref * (a + b)).collect()
}

/// Diagonals of `S_A^+ S_A^-` and `S_B^- S_B^+` in the product basis.
pub fn ladder_number_diagonals(s: SpinMagnitude) -> (Vec<f64>, Vec<f64>) {
    let d = s.dim();
    let c = s.casimir();
    let mut a = Vec::with_capacity(d * d);
    let mut b = Vec::with_capacity(d * d);
    for ia in 0..d {
        let ma = s.m(ia);
        for ib in 0..d {
            let mb = s.m(ib);
            a.push(c + ma - ma * ma);
            b.push(c - mb - mb * mb);
        }
    }
    (a, b)
}

/// `exp(M t)` for a general square matrix (Padé scaling and squaring).
pub fn matrix_exponential(m: &CMatrix, t: f64) -> Result<CMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    if !t.is_finite() || m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix_exponential input"));
    }
    if m.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(CMatrix::identity(m.nrows(), m.ncols()));
    }
    let is_diagonal = m
        .iter()
        .enumerate()
        .all(|(k, z)| k % m.nrows() == k / m.nrows() || *z == C64::new(0.0, 0.0));
    if is_diagonal {
        let diag = m.diagonal().map(|z| (z * t).exp());
        return Ok(CMatrix::from_diagonal(&diag));
    }
    let e = (m * C64::new(t, 0.0)).exp();
    if e.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix_exponential result"));
    }
    Ok(e)
}

/// `exp(−i H t)` for Hermitian `H` via its eigendecomposition.
pub fn unitary_propagator(h: &CMatrix, t: f64) -> Result<CMatrix> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
    }
    if !t.is_finite() || h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("unitary_propagator input"));
    }
    let eig = h.clone().symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| C64::new(0.0, -l * t).exp());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, ph) in phases.iter().enumerate() {
        for z in scaled.column_mut(j).iter_mut() {
            *z *= ph;
        }
    }
    Ok(scaled * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    const SPINS: [u32; 5] = [1, 2, 3, 4, 10];

    #[test]
    fn rejects_bad_spin() {
        assert!(SpinMagnitude::new(0.0).is_err());
        assert!(SpinMagnitude::new(0.3).is_err());
        assert!(SpinMagnitude::new(-1.0).is_err());
        assert!(SpinMagnitude::new(f64::NAN).is_err());
        assert_eq!(SpinMagnitude::new(1.5).unwrap().dim(), 4);
        assert_eq!(SpinMagnitude::new(20.0).unwrap().product_dim(), 1681);
    }

    #[test]
    fn spin_half_matrices() {
        let s = SpinMagnitude::new(0.5).unwrap();
        let [_, _, sz, sp, _] = single_spin_operators(s);
        assert_eq!(sz[(0, 0)].re, 0.5);
        assert_eq!(sz[(1, 1)].re, -0.5);
        // |1/2,-1/2⟩ is index 1; S^+ sends it to index 0 with coefficient 1.
        assert_eq!(sp[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(sp[(1, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn spin_one_ladder() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let [_, _, _, sp, _] = single_spin_operators(s);
        assert!((sp[(0, 1)].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((sp[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let nonzero = sp.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn zz_on_top_state_spin_twenty() {
        let s = SpinMagnitude::new(20.0).unwrap();
        let [_, _, sz, _, _] = single_spin_operators(s);
        let id = CMatrix::identity(s.dim(), s.dim());
        // Only the (0,0) entry matters; avoid building the full 1681² product.
        let za = sz.kronecker(&id);
        let zb = id.kronecker(&sz);
        assert_eq!((za[(0, 0)] * zb[(0, 0)]).re, 400.0);
    }

    #[test]
    fn commutation_and_ladder_relations() {
        let i = C64::new(0.0, 1.0);
        for two_s in SPINS {
            let s = SpinMagnitude::from_twice(two_s).unwrap();
            let o = build_operators(s);
            for (x, y, z, p, m) in [
                (&o.sx_a, &o.sy_a, &o.sz_a, &o.sp_a, &o.sm_a),
                (&o.sx_b, &o.sy_b, &o.sz_b, &o.sp_b, &o.sm_b),
            ] {
                assert!(max_abs(&(commutator(x, y) - z * i)) < 1e-12);
                assert!(max_abs(&(commutator(y, z) - x * i)) < 1e-12);
                assert!(max_abs(&(commutator(z, x) - y * i)) < 1e-12);
                assert!(max_abs(&(p - (x + y * i))) < 1e-12);
                assert!(max_abs(&(m - (x - y * i))) < 1e-12);
                let casimir = x * x + y * y + z * z;
                let expect = CMatrix::identity(s.product_dim(), s.product_dim()) * C64::new(s.casimir(), 0.0);
                assert!(max_abs(&(casimir - expect)) < 1e-10);
            }
            let id = CMatrix::identity(s.product_dim(), s.product_dim());
            let c = C64::new(s.casimir(), 0.0);
            let pm_a = &o.sp_a * &o.sm_a;
            let rhs_a = &id * c + &o.sz_a - &o.sz_a * &o.sz_a;
            assert!(max_abs(&(pm_a - rhs_a)) < 1e-10);
            let mp_b = &o.sm_b * &o.sp_b;
            let rhs_b = &id * c - &o.sz_b - &o.sz_b * &o.sz_b;
            assert!(max_abs(&(mp_b - rhs_b)) < 1e-10);

            let a_ops = [&o.sx_a, &o.sy_a, &o.sz_a, &o.sp_a, &o.sm_a];
            let b_ops = [&o.sx_b, &o.sy_b, &o.sz_b, &o.sp_b, &o.sm_b];
            for a in a_ops {
                for b in b_ops {
                    let bound = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
                    assert!(commutator(a, b).norm() < bound);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for two_s in SPINS {
            let s = SpinMagnitude::from_twice(two_s).unwrap();
            let o = build_operators(s);
            let h = build_hamiltonian(&o, &ModelParams::new(0.7, 1.3)).unwrap();
            assert!(max_abs(&(&h - h.adjoint())) < 1e-12);
        }
    }

    #[test]
    fn uncoupled_hamiltonian_is_sum_of_rotations() {
        let s = SpinMagnitude::new(1.5).unwrap();
        let o = build_operators(s);
        let h = build_hamiltonian(&o, &ModelParams::new(0.8, 0.0)).unwrap();
        let expect = (&o.sx_a + &o.sx_b) * C64::new(0.8, 0.0);
        assert!(max_abs(&(h - expect)) < 1e-15);
    }

    #[test]
    fn coupling_annihilates_top_state() {
        for two_s in [1, 2, 5] {
            let s = SpinMagnitude::from_twice(two_s).unwrap();
            let o = build_operators(s);
            let h = build_hamiltonian(&o, &ModelParams::new(0.0, f64::from(two_s))).unwrap();
            assert!(h.column(0).iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn top_state_has_zero_energy_diagonal() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let o = build_operators(s);
        let h = build_hamiltonian(&o, &ModelParams::new(1.0, 1.0)).unwrap();
        assert_eq!(h[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn hamiltonian_dimension_mismatch() {
        let mut o = build_operators(SpinMagnitude::new(1.0).unwrap());
        o.sx_b = CMatrix::zeros(4, 4);
        assert!(matches!(
            build_hamiltonian(&o, &ModelParams::new(1.0, 1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exponential_of_zero_and_diagonal() {
        let z = CMatrix::zeros(3, 3);
        assert_eq!(matrix_exponential(&z, 2.0).unwrap(), CMatrix::identity(3, 3));
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(0.3, 0.0),
            C64::new(-1.2, 0.0),
        ]));
        let e = matrix_exponential(&d, 1.0).unwrap();
        assert_eq!(e[(0, 0)], C64::new(0.3f64.exp(), 0.0));
        assert_eq!(e[(1, 1)], C64::new((-1.2f64).exp(), 0.0));
        assert_eq!(e[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn exponential_rejects_non_finite() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matrix_exponential(&m, 1.0).is_err());
        assert!(matrix_exponential(&CMatrix::identity(2, 2), f64::INFINITY).is_err());
    }

    #[test]
    fn pade_and_eigen_routes_agree() {
        let s = SpinMagnitude::new(1.0).unwrap();
        let o = build_operators(s);
        let h = build_hamiltonian(&o, &ModelParams::new(1.0, 1.0)).unwrap();
        let minus_ih = &h * C64::new(0.0, -1.0);
        let pade = matrix_exponential(&minus_ih, 0.1).unwrap();
        let eig = unitary_propagator(&h, 0.1).unwrap();
        let diff = (&pade - &eig).norm() / eig.norm();
        assert!(diff < 1e-10, "relative difference {diff}");
        let id = CMatrix::identity(9, 9);
        assert!(max_abs(&(pade.adjoint() * &pade - &id)) < 1e-10);
        assert!(max_abs(&(eig.adjoint() * &eig - &id)) < 1e-10);
    }

    #[test]
    fn propagator_unitary_at_larger_spin() {
        let s = SpinMagnitude::new(5.0).unwrap();
        let o = build_operators(s);
        let h = build_hamiltonian(&o, &ModelParams::new(0.4, 1.2)).unwrap();
        let u = unitary_propagator(&h, 0.37).unwrap();
        let id = CMatrix::identity(s.product_dim(), s.product_dim());
        assert!(max_abs(&(u.adjoint() * &u - id)) < 1e-9);
    }

    #[test]
    fn dissipator_diagonal_matches_operator_form() {
        let s = SpinMagnitude::new(1.5).unwrap();
        let o = build_operators(s);
        let k = dissipator_diagonal(s, 0.7);
        let full = (&o.sp_a * &o.sm_a + &o.sm_b * &o.sp_b) * C64::new(0.7 / (4.0 * 1.5), 0.0);
        for i in 0..s.product_dim() {
            assert!((full[(i, i)].re - k[i]).abs() < 1e-12);
            assert!(k[i] >= 0.0);
        }
        let off: f64 = full.iter().enumerate().filter(|(n, _)| n % 16 != n / 16).map(|(_, z)| z.norm()).sum();
        assert!(off < 1e-12);
    }

    #[test]
    fn spin_magnitude_display() {
        let s = SpinMagnitude::new(2.5).unwrap();
        assert_eq!(s.to_string(), "5/2");
        assert_eq!(SpinMagnitude::new(3.0).unwrap().to_string(), "3");
    }
}
