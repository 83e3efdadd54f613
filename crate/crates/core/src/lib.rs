//! Regularized kernel estimators and asymptotic confidence sets for
//! finite-dimensional functionals of the population minimizer.
//!
//! The usual path: fit with [`fit`] (or pick λ with
//! [`model_selection::cv_select`] first), describe the quantity of interest as
//! a [`functionals::Functional`], estimate its covariance with
//! [`covariance::CovarianceEngine`], and build a
//! [`confidence::ConfidenceEllipsoid`].

pub mod confidence;
pub mod covariance;
pub mod data;
pub mod error;
pub mod functionals;
pub mod io;
pub mod kernels;
pub mod losses;
pub mod model_selection;
pub mod numerics;
pub mod rng;
pub mod simulation;
pub mod solver;

pub use confidence::ConfidenceEllipsoid;
pub use covariance::{CovarianceEngine, CovarianceEstimate};
pub use data::{Dataset, Task};
pub use error::{Error, Result};
pub use functionals::{Functional, FunctionalKind};
pub use kernels::{KernelFamily, KernelSpec};
pub use losses::LossSpec;
pub use numerics::Matrix;
pub use solver::{fit, FitOptions, FittedModel};
