//! Classical mean-field dynamics of the two magnetizations on the unit sphere.
//!
//! The equations of motion, with `κ`-terms damping `A` toward the south pole
//! and pumping `B` toward the north pole:
//!
//! ```text
//! ṁ_A^x =  κ m_A^x m_A^z + Γ m_A^z m_B^y
//! ṁ_B^x = −κ m_B^x m_B^z + Γ m_B^z m_A^y
//! ṁ_A^y = −Ω m_A^z + κ m_A^y m_A^z − Γ m_A^z m_B^x
//! ṁ_B^y = −Ω m_B^z − κ m_B^y m_B^z − Γ m_B^z m_A^x
//! ṁ_A^z =  Ω m_A^y − κ((m_A^x)² + (m_A^y)²) + Γ(m_A^y m_B^x − m_A^x m_B^y)
//! ṁ_B^z =  Ω m_B^y + κ((m_B^x)² + (m_B^y)²) + Γ(m_B^y m_A^x − m_B^x m_A^y)
//! ```
//!
//! Both `|m_A|` and `|m_B|` are conserved exactly by the flow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{task_rng, Domain};
use crate::spin::ModelParams;

/// The classical state: two Bloch vectors.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochPair {
    pub ma: [f64; 3],
    pub mb: [f64; 3],
}

impl BlochPair {
    pub fn new(ma: [f64; 3], mb: [f64; 3]) -> Self {
        Self { ma, mb }
    }

    /// Both magnetizations at the north pole.
    pub fn north() -> Self {
        Self::new([0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [ax, ay, az] = self.ma;
        let [bx, by, bz] = self.mb;
        [ax, ay, az, bx, by, bz]
    }

    pub fn from_array(y: &[f64; 6]) -> Self {
        Self::new([y[0], y[1], y[2]], [y[3], y[4], y[5]])
    }

    pub fn norms(&self) -> (f64, f64) {
        (norm3(&self.ma), norm3(&self.mb))
    }

    pub fn is_finite(&self) -> bool {
        self.ma.iter().chain(&self.mb).all(|v| v.is_finite())
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// An autonomous vector field on `R^N`.
pub trait Flow<const N: usize> {
    fn rhs(&self, y: &[f64; N]) -> [f64; N];

    /// Projects a perturbation onto the invariant manifold's tangent space at
    /// `y`. The default is the identity (no constraint).
    fn project_tangent(&self, _y: &[f64; N], v: [f64; N]) -> [f64; N] {
        v
    }
}

/// The mean-field vector field for fixed parameters.
#[derive(Copy, Clone, Debug)]
pub struct MeanField {
    pub params: ModelParams,
}

impl MeanField {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }
}

/// Time derivative of the six magnetization components.
pub fn meanfield_rhs(y: &[f64; 6], p: &ModelParams) -> [f64; 6] {
    let (o, g, k) = (p.omega, p.gamma, p.kappa);
    let [ax, ay, az, bx, by, bz] = *y;
    [
        k * ax * az + g * az * by,
        -o * az + k * ay * az - g * az * bx,
        o * ay - k * (ax * ax + ay * ay) + g * (ay * bx - ax * by),
        -k * bx * bz + g * bz * ay,
        -o * bz - k * by * bz - g * bz * ax,
        o * by + k * (bx * bx + by * by) + g * (by * ax - bx * ay),
    ]
}

impl Flow<6> for MeanField {
    fn rhs(&self, y: &[f64; 6]) -> [f64; 6] {
        meanfield_rhs(y, &self.params)
    }

    /// Removes the radial component of each subsystem's block.
    fn project_tangent(&self, y: &[f64; 6], mut v: [f64; 6]) -> [f64; 6] {
        for block in 0..2 {
            let o = 3 * block;
            let r2 = y[o] * y[o] + y[o + 1] * y[o + 1] + y[o + 2] * y[o + 2];
            if r2 > 0.0 {
                let dot = (y[o] * v[o] + y[o + 1] * v[o + 1] + y[o + 2] * v[o + 2]) / r2;
                for c in 0..3 {
                    v[o + c] -= dot * y[o + c];
                }
            }
        }
        v
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// One classical fourth-order Runge–Kutta step.
#[inline]
pub fn rk4_step<const N: usize, F: Flow<N> + ?Sized>(f: &F, y: &[f64; N], h: f64) -> [f64; N] {
    let k1 = f.rhs(y);
    let k2 = f.rhs(&axpy(y, 0.5 * h, &k1));
    let k3 = f.rhs(&axpy(y, 0.5 * h, &k2));
    let k4 = f.rhs(&axpy(y, h, &k3));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Fixed-step integration settings.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    /// Integrator step, in units of `1/κ`.
    pub dt: f64,
    /// Final time.
    pub t_end: f64,
    /// Record one sample every this many steps (the initial state is always
    /// recorded).
    pub record_every: usize,
    /// Rescale both vectors to unit length after each step. Off by default;
    /// norm conservation is otherwise left to the integrator.
    pub renormalize: bool,
}

impl IntegrationOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, record_every: 1, renormalize: false }
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    pub fn renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    /// Number of integrator steps, `round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
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
}

/// A recorded mean-field trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldSeries {
    pub times: Vec<f64>,
    pub states: Vec<BlochPair>,
}

impl MeanFieldSeries {
    /// Largest deviation of either vector norm from one.
    pub fn max_norm_drift(&self) -> f64 {
        self.states
            .iter()
            .map(|s| {
                let (a, b) = s.norms();
                (a - 1.0).abs().max((b - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Integrates and calls `visit(t, state)` on every recorded sample.
pub fn integrate_visit<F>(
    state0: &BlochPair,
    p: &ModelParams,
    opts: &IntegrationOptions,
    mut visit: F,
) -> Result<BlochPair>
where
    F: FnMut(f64, &BlochPair),
{
    opts.validate()?;
    if !state0.is_finite() {
        return Err(Error::Divergence { time: 0.0 });
    }
    let flow = MeanField::new(*p);
    let mut y = state0.to_array();
    visit(0.0, state0);
    for n in 1..=opts.steps() {
        y = rk4_step(&flow, &y, opts.dt);
        if opts.renormalize {
            renormalize_blocks(&mut y);
        }
        if n % opts.record_every == 0 {
            let t = n as f64 * opts.dt;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { time: t });
            }
            visit(t, &BlochPair::from_array(&y));
        }
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence { time: opts.steps() as f64 * opts.dt });
    }
    Ok(BlochPair::from_array(&y))
}

fn renormalize_blocks(y: &mut [f64; 6]) {
    for block in y.chunks_exact_mut(3) {
        let n = (block[0] * block[0] + block[1] * block[1] + block[2] * block[2]).sqrt();
        if n > 0.0 {
            block.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// RK4 trajectory from `state0`, sampled according to `opts`.
pub fn integrate_with(state0: &BlochPair, p: &ModelParams, opts: &IntegrationOptions) -> Result<MeanFieldSeries> {
    opts.validate()?;
    let cap = opts.steps() / opts.record_every.max(1) + 1;
    let mut series = MeanFieldSeries { times: Vec::with_capacity(cap), states: Vec::with_capacity(cap) };
    integrate_visit(state0, p, opts, |t, s| {
        series.times.push(t);
        series.states.push(*s);
    })?;
    Ok(series)
}

/// RK4 trajectory sampled at every step `dt` up to `t_end`.
pub fn integrate(state0: &BlochPair, p: &ModelParams, dt: f64, t_end: f64) -> Result<MeanFieldSeries> {
    integrate_with(state0, p, &IntegrationOptions::new(dt, t_end))
}

/// Uniform sampling of `(e, d)` in a disk of radius `a`, lifted to the
/// northern cap `(e, d, sqrt(1 − e² − d²))`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapSampler {
    pub a: f64,
    pub seed: u64,
    /// Use one draw for both subsystems instead of independent draws.
    #[serde(default)]
    pub shared_draw: bool,
}

impl CapSampler {
    pub fn new(a: f64, seed: u64) -> Self {
        Self { a, seed, shared_draw: false }
    }

    pub fn shared(mut self, shared: bool) -> Self {
        self.shared_draw = shared;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(invalid("a", format!("cap radius must lie in (0, 1], got {}", self.a)));
        }
        Ok(())
    }

    /// The `index`-th initial condition; independent of how many others are
    /// drawn.
    pub fn sample_one(&self, index: u64) -> Result<BlochPair> {
        self.validate()?;
        let mut rng = task_rng(self.seed, Domain::CapSample, index);
        let ma = cap_point(&mut rng, self.a);
        let mb = if self.shared_draw { ma } else { cap_point(&mut rng, self.a) };
        Ok(BlochPair::new(ma, mb))
    }

    pub fn sample(&self, n: usize) -> Result<Vec<BlochPair>> {
        if n == 0 {
            return Err(invalid("n", "at least one sample is required"));
        }
        (0..n as u64).map(|i| self.sample_one(i)).collect()
    }
}

fn cap_point<R: Rng>(rng: &mut R, a: f64) -> [f64; 3] {
    loop {
        let e = a * (2.0 * rng.random::<f64>() - 1.0);
        let d = a * (2.0 * rng.random::<f64>() - 1.0);
        let r2 = e * e + d * d;
        if r2 <= a * a {
            return [e, d, (1.0 - r2).max(0.0).sqrt()];
        }
    }
}

/// Convenience wrapper matching the free-function form.
pub fn sample_cap(sampler: &CapSampler, n: usize) -> Result<Vec<BlochPair>> {
    sampler.sample(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn precession_derivative() {
        let s = BlochPair::new([0.0, 0.0, 1.0], [0.0, 0.0, 1.0]);
        let p = ModelParams { omega: 1.0, gamma: 0.0, kappa: 0.0 };
        let d = meanfield_rhs(&s.to_array(), &p);
        assert_eq!(&d[..3], &[0.0, -1.0, 0.0]);
    }

    #[test]
    fn poles_with_coupling() {
        let d = meanfield_rhs(&BlochPair::north().to_array(), &ModelParams::new(1.0, 1.0));
        assert_eq!(d, [0.0, -1.0, 0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn precession_closed_form() {
        let p = ModelParams { omega: 1.0, gamma: 0.0, kappa: 0.0 };
        let series = integrate_with(&BlochPair::north(), &p, &IntegrationOptions::new(1e-3, 10.0).record_every(1000)).unwrap();
        let last = series.states.last().unwrap();
        assert!((series.times.last().unwrap() - 10.0).abs() < 1e-9);
        assert!((last.ma[2] - 10f64.cos()).abs() < 1e-6);
        assert!((last.ma[1] + 10f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn time_reversal_without_dissipation() {
        let p = ModelParams { omega: 0.9, gamma: 1.1, kappa: 0.0 };
        let s0 = CapSampler::new(0.5, 3).sample_one(0).unwrap();
        let fwd = integrate_visit(&s0, &p, &IntegrationOptions::new(1e-3, 5.0), |_, _| {}).unwrap();
        // Reverse time by flipping the sign of every rate in the conservative flow.
        let rev = ModelParams { omega: -0.9, gamma: -1.1, kappa: 0.0 };
        let back = MeanField::new(rev);
        let mut y = fwd.to_array();
        for _ in 0..5000 {
            y = rk4_step(&back, &y, 1e-3);
        }
        let diff: f64 = y.iter().zip(s0.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "diff {diff}");
    }

    #[test]
    fn determinism() {
        let p = ModelParams::new(0.6, 1.3);
        let s0 = CapSampler::new(0.1, 11).sample_one(5).unwrap();
        let opts = IntegrationOptions::new(1e-3, 20.0).record_every(10);
        let a = integrate_with(&s0, &p, &opts).unwrap();
        let b = integrate_with(&s0, &p, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trivial_phase_relaxes_to_fixed_point() {
        // Bottom-left of the (Γ, Ω) plane.
        let p = ModelParams::new(0.2, 0.2);
        let opts = IntegrationOptions::new(1e-3, 400.0).record_every(100);
        let series = integrate_with(&BlochPair::north(), &p, &opts).unwrap();
        let n = series.states.len();
        let a = series.states[n - 1].to_array();
        let b = series.states[n - 101].to_array();
        let var: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(var < 1e-6, "variation {var}");
    }

    #[test]
    fn cap_mean_height_full_hemisphere() {
        let samples = CapSampler::new(1.0, 42).sample(100_000).unwrap();
        let mean: f64 = samples.iter().map(|s| s.ma[2]).sum::<f64>() / samples.len() as f64;
        assert!((mean - 2.0 / 3.0).abs() < 1e-2, "mean {mean}");
    }

    #[test]
    fn cap_small_radius_bound() {
        let samples = CapSampler::new(0.1, 1).sample(2_000).unwrap();
        let bound = (1.0f64 - 0.01).sqrt();
        for s in &samples {
            assert!(s.ma[2] >= bound && s.mb[2] >= bound);
            assert!(s.ma[0].powi(2) + s.ma[1].powi(2) <= 0.01 + 1e-15);
        }
    }

    #[test]
    fn cap_determinism_and_sharing() {
        let s = CapSampler::new(0.3, 9);
        assert_eq!(s.sample(50).unwrap(), s.sample(50).unwrap());
        let independent = s.sample_one(0).unwrap();
        assert_ne!(independent.ma, independent.mb);
        let shared = s.shared(true).sample_one(0).unwrap();
        assert_eq!(shared.ma, shared.mb);
    }

    #[test]
    fn cap_rejects_bad_radius() {
        assert!(CapSampler::new(0.0, 1).sample(1).is_err());
        assert!(CapSampler::new(1.5, 1).sample(1).is_err());
        assert!(CapSampler::new(0.5, 1).sample(0).is_err());
    }

    #[test]
    fn rejects_bad_options() {
        let p = ModelParams::new(1.0, 1.0);
        assert!(integrate(&BlochPair::north(), &p, 0.0, 1.0).is_err());
        assert!(integrate(&BlochPair::north(), &p, 0.1, 0.01).is_err());
        let bad = BlochPair::new([f64::NAN, 0.0, 1.0], [0.0, 0.0, 1.0]);
        assert!(matches!(integrate(&bad, &p, 0.1, 1.0), Err(Error::Divergence { .. })));
    }

    proptest! {
        #[test]
        fn rhs_is_tangent(v in proptest::array::uniform6(-1.0f64..1.0),
                          omega in 0.0f64..2.0, gamma in 0.0f64..2.0, kappa in 0.0f64..2.0) {
            let p = ModelParams { omega, gamma, kappa };
            let d = meanfield_rhs(&v, &p);
            let dot_a = v[0] * d[0] + v[1] * d[1] + v[2] * d[2];
            let dot_b = v[3] * d[3] + v[4] * d[4] + v[5] * d[5];
            prop_assert!(dot_a.abs() < 1e-12);
            prop_assert!(dot_b.abs() < 1e-12);
        }

        #[test]
        fn projection_is_tangent(v in proptest::array::uniform6(-1.0f64..1.0),
                                 w in proptest::array::uniform6(-1.0f64..1.0)) {
            let flow = MeanField::new(ModelParams::new(1.0, 1.0));
            let t = flow.project_tangent(&v, w);
            prop_assert!((v[0] * t[0] + v[1] * t[1] + v[2] * t[2]).abs() < 1e-12);
            prop_assert!((v[3] * t[3] + v[4] * t[4] + v[5] * t[5]).abs() < 1e-12);
        }
    }
}
