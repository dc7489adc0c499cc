use nalgebra::DMatrix;
use ndarray::Array2;

use super::ScatteringError;

/// Centred principal-component basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `k × D`, rows are unit principal directions (zero rows past the rank).
    pub components: Array2<f64>,
    pub singular_values: Vec<f64>,
    /// Fewer than `k` nonzero singular values were found.
    pub rank_deficient: bool,
}

impl PcaBasis {
    pub fn transform(&self, data: &Array2<f64>) -> Result<Array2<f64>, ScatteringError> {
        let d = self.mean.len();
        if data.ncols() != d {
            return Err(ScatteringError::DimensionMismatch { expected: d, actual: data.ncols() });
        }
        let centred = Array2::from_shape_fn(data.dim(), |(i, j)| data[(i, j)] - self.mean[j]);
        Ok(centred.dot(&self.components.t()))
    }

    pub fn inverse_transform(&self, scores: &Array2<f64>) -> Array2<f64> {
        let mut back = scores.dot(&self.components);
        for mut row in back.rows_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        back
    }

    /// Sum of squared differences between `data` and its projection.
    pub fn reconstruction_error(&self, data: &Array2<f64>) -> Result<f64, ScatteringError> {
        let back = self.inverse_transform(&self.transform(data)?);
        Ok(data.iter().zip(back.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
    }
}

/// Fit a `k`-component PCA on the rows of `data` and project them.
///
/// Each basis vector's largest-magnitude entry is made positive.
pub fn pca_fit_transform(data: &Array2<f64>, k: usize) -> Result<(PcaBasis, Array2<f64>), ScatteringError> {
    let (n, d) = data.dim();
    if n < 2 {
        return Err(ScatteringError::TooFewSamples(n));
    }
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(ScatteringError::InvalidRank { k, max });
    }
    let mean: Vec<f64> = (0..d).map(|j| crate::numeric::mean(&data.column(j).to_vec())).collect();
    let centred = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let svd = centred.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values[order[0]];
    let tol = top.max(1.0) * f64::EPSILON * (n.max(d) as f64);

    let mut components = Array2::zeros((k, d));
    let mut singular_values = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for (row, &idx) in order.iter().take(k).enumerate() {
        let s = svd.singular_values[idx];
        if s <= tol {
            rank_deficient = true;
            singular_values.push(0.0);
            continue;
        }
        singular_values.push(s);
        let v: Vec<f64> = (0..d).map(|j| v_t[(idx, j)]).collect();
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (j, x) in v.into_iter().enumerate() {
            components[(row, j)] = sign * x;
        }
    }
    if rank_deficient {
        log::warn!("PCA: fewer than {k} nonzero singular values; padding with zero components");
    }
    let basis = PcaBasis { mean, components, singular_values, rank_deficient };
    let scores = basis.transform(data)?;
    Ok((basis, scores))
}
