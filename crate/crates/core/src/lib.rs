//! Dynamical phase transitions in the driven, damped Dicke model.

pub mod echoes;
pub mod error;
pub mod integrator;
pub mod master_equation;
pub mod povm_homodyne;
pub mod quadrature;
pub mod scenario;
pub mod spin_algebra;
pub mod state;
pub mod weak_noise;

pub use error::{Error, Result};
pub use state::{DensityMatrix, Sector};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/spin-algebra.md")]
    struct SpinAlgebra;
    #[doc = include_str!("../../../book/src/master-equation.md")]
    struct MasterEquation;
    #[doc = include_str!("../../../book/src/echoes.md")]
    struct Echoes;
    #[doc = include_str!("../../../book/src/homodyne.md")]
    struct Homodyne;
    #[doc = include_str!("../../../book/src/weak-noise.md")]
    struct WeakNoise;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    struct Scenarios;
}
