//! Unsupervised subspace alignment by minimizing the empirical Hellinger
//! distance between kernel density estimates of projected source and target
//! samples.
//!
//! The pipeline is:
//!
//! 1. [`density`]: Gaussian KDE of projected samples, with the analytic
//!    gradient of the log-density with respect to the projection matrix.
//! 2. [`divergence`]: the contrast `T = s / (s + t)`, the per-sample loss
//!    `G(T) = 1 - 2 sqrt(T (1 - T))`, the objective `D(W)` and its gradient.
//! 3. [`bandwidth`]: the shared diagonal bandwidth derived from pooled
//!    projected samples.
//! 4. [`optimizer`]: Riemannian steepest descent on the Stiefel manifold with
//!    Armijo backtracking and QR retraction.
//! 5. [`gradcheck`]: central-difference oracle used to validate the analytic
//!    gradient.
//! 6. [`datasets`]: CSV ingestion, synthetic covariate-shift generators and
//!    1-NN transfer evaluation.
//!
//! The [`cli`] module backs the `hellinger-align` binary.

pub mod bandwidth;
pub mod cli;
pub mod datasets;
pub mod density;
pub mod divergence;
pub mod error;
pub mod gradcheck;
pub mod optimizer;
mod numeric;

pub use bandwidth::{compute_bandwidth, compute_bandwidth_with, BandwidthConfig, BandwidthRule};
pub use datasets::{knn_transfer_eval, load_csv, make_shift_pair, standardize, EvalReport, ShiftSpec};
pub use density::{Bandwidth, DomainTag, KdeModel, ProjectionMatrix, SampleSet};
pub use divergence::{gradient, objective, ContrastValue, GradientMatrix, ObjectiveValue};
pub use error::{Error, Result};
pub use gradcheck::{central_difference, compare, GradCheckReport};
pub use optimizer::{fit, init_projection, retract, ConvergedReason, FitConfig, FitReport};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
