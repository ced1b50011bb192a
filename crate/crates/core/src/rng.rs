//! Reproducible random streams keyed by `(seed, domain, index)`.
//!
//! Each task (an initial condition, a Lyapunov perturbation, a quantum
//! trajectory) draws from its own ChaCha stream, so results do not depend on
//! how tasks are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

/// Stream domains. Separate domains keep, e.g., cap samples and Lyapunov
/// perturbations uncorrelated even when they share a seed and an index.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    CapSample = 1,
    LyapunovDirection = 2,
    Trajectory = 3,
    Test = 99,
}

pub fn task_rng(seed: u64, domain: Domain, index: u64) -> TaskRng {
    let key = seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
