//! Largest Lyapunov exponent by the two-trajectory renormalization method.
//!
//! A companion trajectory starts a distance `d0` from the reference along a
//! random tangent direction. After every renormalization interval the
//! separation `d_n` is measured, `ln(d_n / d0)` is accumulated, and the
//! companion is pulled back along the separation vector to distance `d0`.
//! The exponent is the accumulated log-growth divided by the accumulation
//! time.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::meanfield::{rk4_step, BlochPair, CapSampler, Flow, MeanField};
use crate::rng::{task_rng, Domain, TaskRng};
use crate::spin::ModelParams;

/// `|Λ| ≤ VANISHING_TOLERANCE` is classified as a vanishing exponent.
pub const VANISHING_TOLERANCE: f64 = 0.005;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    /// Initial (and restored) separation.
    pub d0: f64,
    /// Renormalization interval `δt`.
    pub interval: f64,
    /// Accumulation horizon `T_max`; `T_max / δt` must be an integer.
    pub t_max: f64,
    /// Time discarded before accumulation starts.
    pub transient: f64,
    /// RK4 step; `δt / step` must be an integer.
    pub step: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { d0: 1e-8, interval: 0.01, t_max: 1000.0, transient: 100.0, step: 1e-3 }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * k.max(1.0) && k >= 1.0).then_some(k as usize)
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0 < 1e-2) {
            return Err(invalid("d0", format!("must lie in (0, 1e-2), got {}", self.d0)));
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(invalid("interval", format!("must be > 0, got {}", self.interval)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("step", format!("must be > 0, got {}", self.step)));
        }
        if integer_ratio(self.t_max, self.interval).is_none() {
            return Err(invalid("t_max", "t_max / interval must be a positive integer"));
        }
        if integer_ratio(self.interval, self.step).is_none() {
            return Err(invalid("step", "interval / step must be a positive integer"));
        }
        if !(self.transient >= 0.0 && self.transient.is_finite()) {
            return Err(invalid("transient", "must be >= 0"));
        }
        Ok(())
    }

    /// `K = T_max / δt`.
    pub fn intervals(&self) -> usize {
        integer_ratio(self.t_max, self.interval).unwrap_or(0)
    }

    fn transient_intervals(&self) -> usize {
        (self.transient / self.interval).round() as usize
    }

    fn substeps(&self) -> usize {
        integer_ratio(self.interval, self.step).unwrap_or(1)
    }
}

fn distance<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn random_tangent<const N: usize, F: Flow<N>>(flow: &F, y: &[f64; N], rng: &mut TaskRng) -> [f64; N] {
    loop {
        let mut v = [0.0; N];
        for c in v.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let v = flow.project_tangent(y, v);
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.map(|c| c / n);
        }
    }
}

/// Largest Lyapunov exponent of an arbitrary flow.
pub fn lle_flow<const N: usize, F: Flow<N>>(
    flow: &F,
    y0: &[f64; N],
    cfg: &LyapunovConfig,
    rng: &mut TaskRng,
) -> Result<f64> {
    cfg.validate()?;
    let substeps = cfg.substeps();
    let warmup = cfg.transient_intervals();
    let total = warmup + cfg.intervals();

    let mut y = *y0;
    let dir = random_tangent(flow, &y, rng);
    let mut z: [f64; N] = std::array::from_fn(|i| y[i] + cfg.d0 * dir[i]);
    let mut log_sum = 0.0;

    for n in 0..total {
        for _ in 0..substeps {
            y = rk4_step(flow, &y, cfg.step);
            z = rk4_step(flow, &z, cfg.step);
        }
        let time = (n + 1) as f64 * cfg.interval;
        if !y.iter().chain(z.iter()).all(|v| v.is_finite()) {
            return Err(Error::Divergence { time });
        }
        let d = distance(&y, &z);
        if d > f64::MIN_POSITIVE {
            if n >= warmup {
                log_sum += (d / cfg.d0).ln();
            }
            let scale = cfg.d0 / d;
            for i in 0..N {
                z[i] = y[i] + (z[i] - y[i]) * scale;
            }
        } else {
            // The companion collapsed onto the reference: restart it along a
            // fresh direction and count the interval as maximal contraction.
            if n >= warmup {
                log_sum += (f64::MIN_POSITIVE / cfg.d0).ln();
            }
            let dir = random_tangent(flow, &y, rng);
            for i in 0..N {
                z[i] = y[i] + cfg.d0 * dir[i];
            }
        }
    }
    Ok(log_sum / cfg.t_max)
}

/// Largest Lyapunov exponent of the mean-field flow from `state0`.
pub fn lle(state0: &BlochPair, p: &ModelParams, cfg: &LyapunovConfig, rng: &mut TaskRng) -> Result<f64> {
    lle_flow(&MeanField::new(*p), &state0.to_array(), cfg, rng)
}

/// Ensemble-averaged exponent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Number of samples that contributed.
    pub count: usize,
    /// Indices of samples that aborted, with the reason.
    pub failed: Vec<(u64, String)>,
}

impl LyapunovEstimate {
    pub fn classify(&self) -> ExponentSign {
        ExponentSign::of(self.mean)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExponentSign {
    Negative,
    Vanishing,
    Positive,
}

impl ExponentSign {
    pub fn of(value: f64) -> Self {
        if value.abs() <= VANISHING_TOLERANCE {
            Self::Vanishing
        } else if value < 0.0 {
            Self::Negative
        } else {
            Self::Positive
        }
    }
}

/// `⟨Λ_L⟩` over `nr` cap-sampled initial conditions. Sample `i` uses cap
/// draw `i` and perturbation stream `i`, so the result does not depend on
/// worker scheduling.
pub fn lle_ensemble(sampler: &CapSampler, nr: usize, p: &ModelParams, cfg: &LyapunovConfig) -> Result<LyapunovEstimate> {
    if nr == 0 {
        return Err(invalid("nr", "ensemble must have at least one member"));
    }
    sampler.validate()?;
    cfg.validate()?;
    let results: Vec<(u64, Result<f64>)> = (0..nr as u64)
        .into_par_iter()
        .map(|i| {
            let run = sampler.sample_one(i).and_then(|s0| {
                let mut rng = task_rng(sampler.seed, Domain::LyapunovDirection, i);
                lle(&s0, p, cfg, &mut rng)
            });
            (i, run)
        })
        .collect();
    let mut values = Vec::with_capacity(nr);
    let mut failed = Vec::new();
    for (i, r) in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) => failed.push((i, e.to_string())),
        }
    }
    if values.is_empty() {
        return Err(Error::DegenerateEnsemble(format!("all {nr} Lyapunov samples failed")));
    }
    let (mean, stderr) = mean_stderr(&values);
    Ok(LyapunovEstimate { mean, stderr, count: values.len(), failed })
}

pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Contraction(f64);

    impl Flow<6> for Contraction {
        fn rhs(&self, y: &[f64; 6]) -> [f64; 6] {
            y.map(|v| -self.0 * v)
        }
    }

    fn short_cfg() -> LyapunovConfig {
        LyapunovConfig { t_max: 200.0, transient: 20.0, ..Default::default() }
    }

    #[test]
    fn linear_contraction_exponent() {
        for lambda in [0.3, 1.0, 2.5] {
            let mut rng = task_rng(1, Domain::Test, 0);
            let v = lle_flow(&Contraction(lambda), &[0.5; 6], &short_cfg(), &mut rng).unwrap();
            assert!((v + lambda).abs() < 0.01 * lambda, "λ = {lambda}: got {v}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(LyapunovConfig::default().validate().is_ok());
        assert_eq!(LyapunovConfig::default().intervals(), 100_000);
        let bad_ratio = LyapunovConfig { t_max: 10.005, ..Default::default() };
        assert!(bad_ratio.validate().is_err());
        let bad_step = LyapunovConfig { step: 0.003, ..Default::default() };
        assert!(bad_step.validate().is_err());
        let bad_d0 = LyapunovConfig { d0: 0.0, ..Default::default() };
        assert!(bad_d0.validate().is_err());
    }

    #[test]
    fn trivial_phase_is_negative() {
        let p = ModelParams::new(0.2, 0.2);
        let mut rng = task_rng(5, Domain::Test, 0);
        let v = lle(&BlochPair::north(), &p, &short_cfg(), &mut rng).unwrap();
        assert!(v < -VANISHING_TOLERANCE, "got {v}");
        assert_eq!(ExponentSign::of(v), ExponentSign::Negative);
    }

    #[test]
    fn classification() {
        assert_eq!(ExponentSign::of(0.004), ExponentSign::Vanishing);
        assert_eq!(ExponentSign::of(-0.005), ExponentSign::Vanishing);
        assert_eq!(ExponentSign::of(0.02), ExponentSign::Positive);
        assert_eq!(ExponentSign::of(-0.1), ExponentSign::Negative);
    }

    #[test]
    fn ensemble_is_reproducible() {
        let cfg = LyapunovConfig { t_max: 20.0, transient: 5.0, ..Default::default() };
        let sampler = CapSampler::new(0.1, 17);
        let p = ModelParams::new(0.5, 1.0);
        let a = lle_ensemble(&sampler, 4, &p, &cfg).unwrap();
        let b = lle_ensemble(&sampler, 4, &p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count, 4);
        assert!(a.failed.is_empty());
        assert!(lle_ensemble(&sampler, 0, &p, &cfg).is_err());
    }
}
