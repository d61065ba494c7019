//! Accelerated SGD (ASGD), plain SGD and stochastic heavy ball on
//! overparameterized least squares with a diagonal data covariance.
//!
//! The crate has three independent routes to the tail-averaged excess risk:
//!
//! - [`bounds`]: closed-form instance-dependent upper bounds, segmented by the
//!   eigenvalue cutoffs from [`hyper`];
//! - [`oracle`]: the exact second-moment recursion of the iterates (Gaussian
//!   or one-hot fourth moments), with a dense reference implementation;
//! - [`simulate`]: path-wise streaming runs and seeded Monte Carlo averages.
//!
//! [`blockdyn`] holds the exact spectral analysis of the per-eigenvalue 2×2
//! iteration blocks that the bounds are built on.

pub mod blockdyn;
pub mod bounds;
pub mod error;
pub mod hyper;
pub mod oracle;
pub mod presets;
pub mod simulate;
pub mod spectrum;
pub mod sum;
pub mod verify;

pub use error::{Error, Result};
pub use hyper::{BoundConstants, Cutoffs, HyperParams, Regime};
pub use spectrum::{ProblemInstance, Spectrum, SpectrumKind, Weight};
