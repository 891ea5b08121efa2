//! Confidence-aware cognitive diagnosis.
//!
//! Students carry a Gaussian latent ability per concept; exercises carry a
//! difficulty vector and a discrimination scalar. A pluggable diagnostic
//! function (IRT, MIRT or NCD) maps a sampled ability to a probability of a
//! correct answer. Training combines a prediction loss, a KL term toward a
//! learned prior consensus, and a pairwise calibration loss that ranks the
//! learned variances against how often each (student, concept) cell is
//! predicted correctly.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod latent;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
