//! Simulation of two coherently coupled dissipative collective spins.

pub mod density;
pub mod ensemble;
pub mod error;
pub mod lindblad;
pub mod lyapunov;
pub mod meanfield;
pub mod ness;
pub mod observables;
pub mod rng;
pub mod sparse;
pub mod spin;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/meanfield.md")]
    struct MeanField;
    #[doc = include_str!("../../../book/src/lyapunov.md")]
    struct Lyapunov;
    #[doc = include_str!("../../../book/src/synchronization.md")]
    struct Synchronization;
    #[doc = include_str!("../../../book/src/trajectories.md")]
    struct Trajectories;
    #[doc = include_str!("../../../book/src/observables.md")]
    struct Observables;
    #[doc = include_str!("../../../book/src/ness.md")]
    struct Ness;
    #[doc = include_str!("../../../book/src/oracle.md")]
    struct Oracle;
}
