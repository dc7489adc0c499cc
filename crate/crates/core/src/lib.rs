//! Calibrated grid-likelihood inference for ensemble predictions of
//! cosmological parameters.
//!
//! The crate turns ensemble predictions of `(Ω_m, S_8)` over a discrete
//! cosmology grid into calibrated posterior means and marginal
//! uncertainties. The pipeline runs in this order:
//!
//! 1. bind validation predictions to the grid ([`grid`]),
//! 2. estimate per-point moments, smooth them across the grid, shrink the
//!    covariances toward their diagonal and fit a global temperature
//!    ([`calibrate`]),
//! 3. weight ensemble members by their marginal likelihood on the test set
//!    and evaluate the grid posterior ([`posterior`]),
//! 4. score the result and tune the calibration hyperparameters
//!    ([`scoring`]).
//!
//! Supporting pieces: dihedral test-time augmentation ([`d4`]) and
//! scattering-covariance feature extraction ([`scattering`]). File formats,
//! the synthetic data generator and the command implementations live in
//! [`pipeline`].
//!
//! ```text
//! cargo run --example calibrate_synthetic
//! cargo run --example end_to_end
//! ```

pub mod calibrate;
pub mod d4;
pub mod grid;
pub mod numeric;
pub mod pipeline;
pub mod posterior;
pub mod scattering;
pub mod scoring;

pub use calibrate::{calibrate_full, CalibrationError};
pub use grid::{
    bind_predictions, CalibratedLikelihood, CalibrationConfig, CosmologyGrid, GridError,
    MomentEntry, PosteriorResult, PredictionKind, PredictionRecord, PredictionSet, RawRecord,
};
pub use posterior::{infer_batch, InferenceBatch, PosteriorError};
pub use scoring::{evaluate, score_single, tune_calibration, ScoreReport};

/// Two-component parameter vector `(Ω_m, S_8)`.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2×2 matrix over the parameter space.
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Dimension of the parameter space.
pub const PARAM_DIM: usize = 2;
