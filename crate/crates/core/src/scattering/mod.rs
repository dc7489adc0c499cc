//! Scattering-covariance statistics of 2D fields.
//!
//! A bank of oriented Morlet-style band-pass filters is applied by FFT. From
//! the first-layer coefficients `I ⋆ ψ^λ` and their moduli the module forms
//! four families of statistics:
//!
//! * `S1[λ] = ⟨|I ⋆ ψ^λ|⟩`
//! * `S2[λ] = ⟨|I ⋆ ψ^λ|²⟩`
//! * `S3[λ1, λ2] = Cov[I ⋆ ψ^λ1, |I ⋆ ψ^λ2| ⋆ ψ^λ1]` for `j2 > j1`
//! * `S4[λ1, λ2, λ3] = Cov[|I ⋆ ψ^λ3| ⋆ ψ^λ1, |I ⋆ ψ^λ2| ⋆ ψ^λ1]` for
//!   `j1 < j2 <= j3`
//!
//! with `Cov[X, Y] = ⟨X Y*⟩ - ⟨X⟩⟨Y*⟩` and `⟨·⟩` the mean over valid
//! pixels. Masked pixels are zero-filled before each convolution.
//!
//! [`isotropic_reduce`] averages over a global rotation of the orientation
//! indices, and [`pca_fit_transform`] compresses the reduced vectors.

mod bank;
mod coeffs;
mod fft;
mod pca;

pub use bank::{build_bank, WaveletBank, FILTER_FAMILY};
pub use coeffs::{
    isotropic_dimension, isotropic_reduce, scattering_cov, wavelet_convolve, S3Entry, S4Entry, ScatteringVector,
};
pub use fft::Fft2;
pub use pca::{pca_fit_transform, PcaBasis};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error("{j} scales need 2^(J-1) = {needed} <= min(H, W) = {available}")]
    ScaleOverflow { j: usize, needed: usize, available: usize },
    #[error("need at least one scale and one orientation")]
    EmptyBank,
    #[error("field shape {field:?} does not match bank shape {bank:?}")]
    ShapeMismatch { field: (usize, usize), bank: (usize, usize) },
    #[error("filter index ({j}, {l}) out of range")]
    FilterIndex { j: usize, l: usize },
    #[error("field has no valid pixels")]
    NoValidPixels,
    #[error("PCA needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("PCA rank {k} must lie in 1..={max}")]
    InvalidRank { k: usize, max: usize },
    #[error("PCA input dimension {actual} does not match basis dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}
