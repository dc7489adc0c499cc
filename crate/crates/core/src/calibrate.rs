//! Turns pooled validation predictions into calibrated per-point likelihood
//! moments.
//!
//! Stage order: empirical moments, kernel smoothing across the grid,
//! shrinkage toward the diagonal, then a single global temperature fit on
//! the whitened residuals of the shrunk moments. The Hartlap factor of each
//! point is stored on the model and applied to the precision matrix when the
//! likelihood is evaluated.

use std::collections::BTreeMap;

use ndarray::Array2;
use thiserror::Error;

use crate::grid::{group_by_cosmology, CalibratedLikelihood, CalibrationConfig, CosmologyGrid, GridError, MomentEntry, PredictionKind, PredictionSet};
use crate::numeric::{cholesky2, forward_substitute, mean, mean_vec2, median, pairwise_sum, symmetrize};
use crate::{Mat2, Vec2, PARAM_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("grid point {grid_index} has {n} samples; at least 2 are required")]
    InsufficientSamples { grid_index: usize, n: usize },
    #[error("Hartlap correction is not positive for N = {n}, d = {dim}")]
    DegenerateCorrection { n: usize, dim: usize },
    #[error("covariance at grid point {grid_index} is not positive definite")]
    NotPositiveDefinite { grid_index: usize },
    #[error("no residuals to fit a temperature on")]
    EmptyResiduals,
    #[error("expected {expected} entries, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("calibration needs a validation set")]
    NotValidation,
    #[error("at grid point {grid_index}: {source}")]
    AtGridPoint {
        grid_index: usize,
        #[source]
        source: Box<CalibrationError>,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Non-fatal conditions met during calibration.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationWarning {
    /// Fewer than six grid points: the bandwidth scale uses the median
    /// nearest-neighbour distance instead of the fifth.
    KernelFallback { scale: f64 },
    /// Single-point grid: smoothing is the identity.
    SinglePointGrid,
    /// Mean whitened residual was zero; temperature set to 1.
    DegenerateResiduals,
}

impl std::fmt::Display for CalibrationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::KernelFallback { scale } => {
                write!(f, "grid too small for fifth-neighbour scale; using nearest-neighbour median {scale}")
            }
            Self::SinglePointGrid => write!(f, "single-point grid; smoothing skipped"),
            Self::DegenerateResiduals => write!(f, "all whitened residuals are zero; temperature set to 1"),
        }
    }
}

/// Per-point sample mean and unbiased covariance (divisor `N_g - 1`), with
/// `jitter` added to the covariance diagonal.
pub fn estimate_moments(
    groups: &BTreeMap<usize, Vec<Vec2>>,
    jitter: f64,
) -> Result<Vec<MomentEntry>, CalibrationError> {
    groups
        .iter()
        .map(|(&grid_index, preds)| {
            let n = preds.len();
            if n < 2 {
                return Err(CalibrationError::InsufficientSamples { grid_index, n });
            }
            let mu = mean_vec2(preds);
            let dx: Vec<f64> = preds.iter().map(|p| p.x - mu.x).collect();
            let dy: Vec<f64> = preds.iter().map(|p| p.y - mu.y).collect();
            let denom = (n - 1) as f64;
            let sxx = pairwise_sum(&dx.iter().map(|v| v * v).collect::<Vec<_>>()) / denom;
            let syy = pairwise_sum(&dy.iter().map(|v| v * v).collect::<Vec<_>>()) / denom;
            let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>()) / denom;
            Ok(MomentEntry {
                grid_index,
                mean: mu,
                cov: Mat2::new(sxx + jitter, sxy, sxy, syy + jitter),
                n_samples: n,
            })
        })
        .collect()
}

/// `(N - d - 2) / (N - 1)`, the debiasing factor for an inverse covariance
/// estimated from `N` samples in `d` dimensions.
pub fn hartlap_factor(n: usize, dim: usize) -> Result<f64, CalibrationError> {
    if n <= dim + 2 {
        return Err(CalibrationError::DegenerateCorrection { n, dim });
    }
    Ok((n - dim - 2) as f64 / (n - 1) as f64)
}

/// How the kernel length scale was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelScale {
    FifthNeighbour,
    NearestNeighbourFallback,
    SinglePoint,
}

/// Row-stochastic Gaussian smoothing weights over the grid.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    pub weights: Array2<f64>,
    pub bandwidth: f64,
    /// Median distance to the k-th nearest neighbour (k = 5, or 1 in the
    /// fallback).
    pub med5: f64,
    pub scale: KernelScale,
}

impl SmoothingKernel {
    pub fn warning(&self) -> Option<CalibrationWarning> {
        match self.scale {
            KernelScale::FifthNeighbour => None,
            KernelScale::NearestNeighbourFallback => Some(CalibrationWarning::KernelFallback { scale: self.med5 }),
            KernelScale::SinglePoint => Some(CalibrationWarning::SinglePointGrid),
        }
    }
}

/// Median over grid points of the distance to the `k`-th nearest other point.
pub fn median_kth_neighbour_distance(grid: &CosmologyGrid, k: usize) -> f64 {
    let pts = grid.points();
    let kth: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = pts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p - q).norm())
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    median(&kth)
}

/// Gaussian kernel with standard deviation `sigma_bw * med5`, each row
/// normalized to one.
pub fn build_kernel(grid: &CosmologyGrid, sigma_bw: f64) -> Result<SmoothingKernel, CalibrationError> {
    if !(sigma_bw > 0.0) {
        return Err(GridError::InvalidConfig(format!("sigma_bw must be > 0, got {sigma_bw}")).into());
    }
    let g = grid.len();
    if g == 1 {
        return Ok(SmoothingKernel {
            weights: Array2::ones((1, 1)),
            bandwidth: sigma_bw,
            med5: 1.0,
            scale: KernelScale::SinglePoint,
        });
    }
    let (med5, scale) = if g >= 6 {
        (median_kth_neighbour_distance(grid, 5), KernelScale::FifthNeighbour)
    } else {
        (median_kth_neighbour_distance(grid, 1), KernelScale::NearestNeighbourFallback)
    };
    let h = sigma_bw * med5;
    let pts = grid.points();
    let mut weights = Array2::zeros((g, g));
    for i in 0..g {
        // Self-distance is zero, so the row maximum of the log-weights is 0.
        let raw: Vec<f64> = (0..g)
            .map(|j| {
                let d2 = (pts[i] - pts[j]).norm_squared();
                (-d2 / (2.0 * h * h)).exp()
            })
            .collect();
        let total = pairwise_sum(&raw);
        for (j, w) in raw.into_iter().enumerate() {
            weights[(i, j)] = w / total;
        }
    }
    Ok(SmoothingKernel { weights, bandwidth: h, med5, scale })
}

/// Kernel-average the means, then the covariances plus the spread of the
/// neighbouring means around the smoothed mean.
pub fn smooth_moments(raw: &[MomentEntry], kernel: &SmoothingKernel) -> Result<Vec<MomentEntry>, CalibrationError> {
    let g = kernel.weights.nrows();
    if raw.len() != g {
        return Err(CalibrationError::ShapeMismatch { expected: g, actual: raw.len() });
    }
    let mut out = Vec::with_capacity(g);
    for (i, entry) in raw.iter().enumerate() {
        let row = kernel.weights.row(i);
        let mut mu_bar = Vec2::zeros();
        for (w, m) in row.iter().zip(raw) {
            mu_bar += *w * m.mean;
        }
        let mut cov_bar = Mat2::zeros();
        for (w, m) in row.iter().zip(raw) {
            let d = m.mean - mu_bar;
            cov_bar += *w * (m.cov + d * d.transpose());
        }
        out.push(MomentEntry {
            grid_index: entry.grid_index,
            mean: mu_bar,
            cov: symmetrize(&cov_bar),
            n_samples: entry.n_samples,
        });
    }
    Ok(out)
}

/// `(1 - λ) Σ + λ diag(Σ)`.
pub fn shrink_covariance(sigma: &Mat2, lambda_lw: f64) -> Mat2 {
    let off = (1.0 - lambda_lw) * sigma[(0, 1)];
    let off_t = (1.0 - lambda_lw) * sigma[(1, 0)];
    Mat2::new(sigma[(0, 0)], off, off_t, sigma[(1, 1)])
}

/// Squared Mahalanobis norm of each validation residual against its own
/// grid point, via the Cholesky factor of that point's covariance.
pub fn whiten_residuals(val: &PredictionSet, moments: &[MomentEntry]) -> Result<Vec<f64>, CalibrationError> {
    let mut factors: BTreeMap<usize, (Vec2, Mat2)> = BTreeMap::new();
    for m in moments {
        let lower = cholesky2(&m.cov).ok_or(CalibrationError::NotPositiveDefinite { grid_index: m.grid_index })?;
        factors.insert(m.grid_index, (m.mean, lower));
    }
    val.records
        .iter()
        .filter_map(|r| r.grid_index.map(|g| (g, r.pred)))
        .map(|(g, pred)| {
            let (mu, lower) = factors
                .get(&g)
                .ok_or(CalibrationError::InsufficientSamples { grid_index: g, n: 0 })?;
            let z = forward_substitute(lower, &(pred - mu));
            Ok(z.norm_squared())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureFit {
    pub tau: f64,
    pub degenerate: bool,
}

/// `τ = sqrt(mean(q) / p_dof)`. A zero mean yields `τ = 1` flagged as
/// degenerate.
pub fn fit_temperature(q_values: &[f64], p_dof: f64) -> Result<TemperatureFit, CalibrationError> {
    if q_values.is_empty() {
        return Err(CalibrationError::EmptyResiduals);
    }
    let mean_q = mean(q_values);
    if mean_q <= 0.0 {
        return Ok(TemperatureFit { tau: 1.0, degenerate: true });
    }
    Ok(TemperatureFit { tau: (mean_q / p_dof).sqrt(), degenerate: false })
}

fn at(grid_index: usize) -> impl Fn(CalibrationError) -> CalibrationError {
    move |e| match e {
        CalibrationError::AtGridPoint { .. } => e,
        other => CalibrationError::AtGridPoint { grid_index, source: Box::new(other) },
    }
}

/// Full calibration on the pooled validation predictions of all members.
pub fn calibrate_full(val: &PredictionSet, cfg: &CalibrationConfig) -> Result<CalibratedLikelihood, CalibrationError> {
    cfg.validate()?;
    if val.kind != PredictionKind::Validation {
        return Err(CalibrationError::NotValidation);
    }
    let grid = &val.grid;
    let groups = group_by_cosmology(val);
    if let Some(g) = (0..grid.len()).find(|g| !groups.contains_key(g)) {
        return Err(at(g)(CalibrationError::InsufficientSamples { grid_index: g, n: 0 }));
    }
    let raw = estimate_moments(&groups, cfg.cov_jitter).map_err(|e| match &e {
        CalibrationError::InsufficientSamples { grid_index, .. } => at(*grid_index)(e),
        _ => e,
    })?;

    let hartlap = raw
        .iter()
        .map(|m| {
            if cfg.hartlap_enabled {
                hartlap_factor(m.n_samples, PARAM_DIM).map_err(at(m.grid_index))
            } else {
                Ok(1.0)
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let kernel = build_kernel(grid, cfg.sigma_bw)?;
    let mut warnings: Vec<CalibrationWarning> = kernel.warning().into_iter().collect();
    let smoothed = smooth_moments(&raw, &kernel)?;
    let shrunk: Vec<MomentEntry> = smoothed
        .into_iter()
        .map(|m| MomentEntry { cov: shrink_covariance(&m.cov, cfg.lambda_lw), ..m })
        .collect();

    let q = whiten_residuals(val, &shrunk)?;
    let fit = fit_temperature(&q, cfg.p_dof)?;
    if fit.degenerate {
        warnings.push(CalibrationWarning::DegenerateResiduals);
    }
    let tau2 = fit.tau * fit.tau;
    let moments: Vec<MomentEntry> = shrunk.into_iter().map(|m| MomentEntry { cov: m.cov * tau2, ..m }).collect();
    for m in &moments {
        if cholesky2(&m.cov).is_none() {
            return Err(at(m.grid_index)(CalibrationError::NotPositiveDefinite { grid_index: m.grid_index }));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut provenance = BTreeMap::new();
    provenance.insert("stage_order".into(), "moments,smooth,shrink,temperature".into());
    provenance.insert("hartlap_placement".into(), "precision-at-evaluation".into());
    provenance.insert(
        "hartlap_normalization".into(),
        if cfg.hartlap_in_normalization { "included" } else { "quadratic-form-only" }.into(),
    );
    provenance.insert("kernel_scale".into(), format!("{:?}", kernel.scale));
    provenance.insert("med5".into(), kernel.med5.to_string());
    provenance.insert("bandwidth".into(), kernel.bandwidth.to_string());
    provenance.insert("n_validation".into(), val.records.len().to_string());
    provenance.insert(
        "pooled_members".into(),
        val.members().iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
    );
    if !warnings.is_empty() {
        provenance.insert(
            "warnings".into(),
            warnings.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        );
    }

    Ok(CalibratedLikelihood {
        grid: grid.clone(),
        moments,
        temperature: fit.tau,
        hartlap,
        config: *cfg,
        provenance,
    })
}
