//! Small numerical helpers shared across modules.
//!
//! Reductions here run in a fixed order so results never depend on thread
//! scheduling.

use crate::{Mat2, Vec2};

/// Pairwise summation over the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]. Returns NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// `log Σ exp(x_i)` with max subtraction. Returns `-inf` if every entry is
/// `-inf` or the slice is empty, and NaN if any entry is NaN.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    if values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Normalized `exp(x_i)` weights computed with max subtraction.
///
/// Returns `None` when no entry is finite.
pub fn softmax(log_weights: &[f64]) -> Option<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let raw: Vec<f64> = log_weights
        .iter()
        .map(|v| if v.is_finite() { (v - max).exp() } else { 0.0 })
        .collect();
    let total = pairwise_sum(&raw);
    Some(raw.into_iter().map(|w| w / total).collect())
}

/// Mean of a list of 2-vectors, component-wise pairwise summation.
pub fn mean_vec2(points: &[Vec2]) -> Vec2 {
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    Vec2::new(mean(&xs), mean(&ys))
}

/// Symmetrize a 2×2 matrix by averaging the off-diagonal pair.
pub fn symmetrize(m: &Mat2) -> Mat2 {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Mat2::new(m[(0, 0)], off, off, m[(1, 1)])
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let half_trace = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (half_trace - radius, half_trace + radius)
}

/// Lower Cholesky factor of a symmetric 2×2 matrix, or `None` if it is not
/// strictly positive definite.
pub fn cholesky2(m: &Mat2) -> Option<Mat2> {
    let a = m[(0, 0)];
    if !(a > 0.0) || !a.is_finite() {
        return None;
    }
    let l00 = a.sqrt();
    let l10 = m[(1, 0)] / l00;
    let rem = m[(1, 1)] - l10 * l10;
    if !(rem > 0.0) || !rem.is_finite() {
        return None;
    }
    Some(Mat2::new(l00, 0.0, l10, rem.sqrt()))
}

/// Solve `L z = r` for lower-triangular 2×2 `L`.
pub fn forward_substitute(lower: &Mat2, r: &Vec2) -> Vec2 {
    let z0 = r.x / lower[(0, 0)];
    let z1 = (r.y - lower[(1, 0)] * z0) / lower[(1, 1)];
    Vec2::new(z0, z1)
}

/// Median of a non-empty slice (average of the two middle values for even
/// lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
