//! Exact and perturbative one-particle Green's functions for small
//! finite-basis electronic systems.
//!
//! The crate builds the exact propagator of a model from full configuration
//! interaction, extracts the self-energy and its perturbation corrections,
//! solves the inverse Dyson equation for ionization and attachment roots, and
//! implements two infinite partial summations (ladder TDA and diagonal
//! self-consistent second order). A small four-pole model shows how a
//! Taylor expansion of a propagator in the coupling constant can diverge.
//!
//! ```
//! use mbgf::model_io::{generate_model, ModelSpec};
//! use mbgf::fci::ExactPropagator;
//!
//! let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
//! let exact = ExactPropagator::new(&ints, 1.0, 20_000).unwrap();
//! assert!((exact.e0 - (1.0 - 5f64.sqrt())).abs() < 1e-12);
//! ```

pub mod dyson;
pub mod error;
pub mod fci;
mod linalg;
pub mod model_io;
pub mod perturbation;
pub mod resummation;
pub mod taylor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/perturbation.md")]
    mod perturbation {}
    #[doc = include_str!("../../../book/src/dyson.md")]
    mod dyson {}
    #[doc = include_str!("../../../book/src/resummation.md")]
    mod resummation {}
    #[doc = include_str!("../../../book/src/taylor.md")]
    mod taylor {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
