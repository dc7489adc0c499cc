//! Data model shared by every stage: the cosmology grid, bound prediction
//! sets, per-point moments and the frozen calibrated likelihood.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::sym_eigenvalues;
use crate::{Mat2, Vec2};

/// Absolute per-coordinate tolerance when matching labels to grid points.
pub const GRID_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid has no points")]
    EmptyGrid,
    #[error("grid point {index} is not finite")]
    NonFinitePoint { index: usize },
    #[error("duplicate grid point ({omega_m}, {s8})")]
    DuplicatePoint { omega_m: f64, s8: f64 },
    #[error("label ({omega_m}, {s8}) of map '{map_id}' is not on the grid")]
    LabelNotOnGrid { map_id: String, omega_m: f64, s8: f64 },
    #[error("validation record for map '{map_id}' has no true label")]
    MissingLabel { map_id: String },
    #[error("prediction for map '{map_id}' is not finite")]
    NonFinitePrediction { map_id: String },
    #[error("prediction set is empty")]
    EmptySet,
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
}

/// The discrete set of labeled `(Ω_m, S_8)` points.
///
/// Indices follow the lexicographic order of the points, so the same set of
/// points always gets the same indices regardless of input row order.
#[derive(Debug, Clone, PartialEq)]
pub struct CosmologyGrid {
    points: Vec<Vec2>,
}

impl CosmologyGrid {
    pub fn new(points: impl IntoIterator<Item = Vec2>) -> Result<Self, GridError> {
        let mut points: Vec<Vec2> = points.into_iter().collect();
        if points.is_empty() {
            return Err(GridError::EmptyGrid);
        }
        if let Some(index) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GridError::NonFinitePoint { index });
        }
        points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        for pair in points.windows(2) {
            if pair[0] == pair[1] {
                return Err(GridError::DuplicatePoint { omega_m: pair[0].x, s8: pair[0].y });
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Vec2 {
        self.points[index]
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Index of the grid point within [`GRID_MATCH_TOLERANCE`] of `theta`
    /// on both coordinates, if any.
    pub fn locate(&self, theta: &Vec2) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let dx = (p.x - theta.x).abs();
            let dy = (p.y - theta.y).abs();
            if dx <= GRID_MATCH_TOLERANCE && dy <= GRID_MATCH_TOLERANCE {
                let d = dx.max(dy);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    /// `(max - min)` of each parameter over the grid.
    pub fn ranges(&self) -> Vec2 {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionKind {
    Validation,
    Test,
}

/// Unbound prediction row as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub member_id: u32,
    pub map_id: String,
    pub truth: Option<Vec2>,
    pub pred: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub member_id: u32,
    pub map_id: String,
    /// Present for validation records, absent for test records.
    pub grid_index: Option<usize>,
    pub pred: Vec2,
}

#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub grid: CosmologyGrid,
    pub records: Vec<PredictionRecord>,
    pub kind: PredictionKind,
}

impl PredictionSet {
    /// Sorted distinct member ids.
    pub fn members(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.member_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Sub-set restricted to records for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&PredictionRecord) -> bool) -> PredictionSet {
        PredictionSet {
            grid: self.grid.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            kind: self.kind,
        }
    }
}

/// Match raw records to grid indices.
///
/// Validation records must carry a label within tolerance of a grid point.
/// Test records are bound without a grid index; any label they carry is
/// ignored.
pub fn bind_predictions(
    grid: &CosmologyGrid,
    raw: Vec<RawRecord>,
    kind: PredictionKind,
) -> Result<PredictionSet, GridError> {
    if raw.is_empty() {
        return Err(GridError::EmptySet);
    }
    let mut records = Vec::with_capacity(raw.len());
    for r in raw {
        if !r.pred.x.is_finite() || !r.pred.y.is_finite() {
            return Err(GridError::NonFinitePrediction { map_id: r.map_id });
        }
        let grid_index = match kind {
            PredictionKind::Test => None,
            PredictionKind::Validation => {
                let truth = r
                    .truth
                    .ok_or_else(|| GridError::MissingLabel { map_id: r.map_id.clone() })?;
                Some(grid.locate(&truth).ok_or_else(|| GridError::LabelNotOnGrid {
                    map_id: r.map_id.clone(),
                    omega_m: truth.x,
                    s8: truth.y,
                })?)
            }
        };
        records.push(PredictionRecord {
            member_id: r.member_id,
            map_id: r.map_id,
            grid_index,
            pred: r.pred,
        });
    }
    Ok(PredictionSet { grid: grid.clone(), records, kind })
}

/// Partition validation predictions by grid index. Grid points without any
/// record are absent from the map.
pub fn group_by_cosmology(set: &PredictionSet) -> BTreeMap<usize, Vec<Vec2>> {
    let mut groups: BTreeMap<usize, Vec<Vec2>> = BTreeMap::new();
    for r in &set.records {
        if let Some(g) = r.grid_index {
            groups.entry(g).or_default().push(r.pred);
        }
    }
    groups
}

/// Mean and covariance of the predictions at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry {
    pub grid_index: usize,
    pub mean: Vec2,
    pub cov: Mat2,
    pub n_samples: usize,
}

impl MomentEntry {
    pub fn is_symmetric(&self) -> bool {
        (self.cov[(0, 1)] - self.cov[(1, 0)]).abs() <= 1e-12
    }

    pub fn min_eigenvalue(&self) -> f64 {
        sym_eigenvalues(&self.cov).0
    }
}

fn default_true() -> bool {
    true
}

fn default_jitter() -> f64 {
    1e-10
}

/// Hyperparameters of the calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Kernel bandwidth in units of the median fifth-neighbour distance.
    pub sigma_bw: f64,
    /// Shrinkage amplitude toward the diagonal, in `[0, 1]`.
    pub lambda_lw: f64,
    /// Target mean of the whitened squared residuals.
    pub p_dof: f64,
    #[serde(default = "default_true")]
    pub hartlap_enabled: bool,
    /// Added to covariance diagonals before any inversion.
    #[serde(default = "default_jitter")]
    pub cov_jitter: f64,
    /// Also fold the Hartlap factor into the Gaussian normalization. Off by
    /// default: the factor only scales the quadratic form.
    #[serde(default)]
    pub hartlap_in_normalization: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            sigma_bw: 1.0,
            lambda_lw: 0.1,
            p_dof: 2.0,
            hartlap_enabled: true,
            cov_jitter: default_jitter(),
            hartlap_in_normalization: false,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.sigma_bw > 0.0 && self.sigma_bw.is_finite()) {
            return Err(GridError::InvalidConfig(format!("sigma_bw must be > 0, got {}", self.sigma_bw)));
        }
        if !(0.0..=1.0).contains(&self.lambda_lw) {
            return Err(GridError::InvalidConfig(format!(
                "lambda_lw must lie in [0, 1], got {}",
                self.lambda_lw
            )));
        }
        if !(self.p_dof > 0.0 && self.p_dof.is_finite()) {
            return Err(GridError::InvalidConfig(format!("p_dof must be > 0, got {}", self.p_dof)));
        }
        if !(self.cov_jitter >= 0.0 && self.cov_jitter.is_finite()) {
            return Err(GridError::InvalidConfig(format!(
                "cov_jitter must be >= 0, got {}",
                self.cov_jitter
            )));
        }
        Ok(())
    }

    /// Total order used for deterministic tie-breaking between candidates.
    pub fn lexicographic_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sigma_bw
            .total_cmp(&other.sigma_bw)
            .then(self.lambda_lw.total_cmp(&other.lambda_lw))
            .then(self.p_dof.total_cmp(&other.p_dof))
            .then(self.hartlap_enabled.cmp(&other.hartlap_enabled))
            .then(self.cov_jitter.total_cmp(&other.cov_jitter))
            .then(self.hartlap_in_normalization.cmp(&other.hartlap_in_normalization))
    }
}

/// The frozen inference model: grid, calibrated moments, temperature and the
/// per-point Hartlap factors applied to the precision matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedLikelihood {
    pub grid: CosmologyGrid,
    /// One entry per grid index, in index order. `cov` is the final
    /// temperature-scaled, shrunk, smoothed covariance.
    pub moments: Vec<MomentEntry>,
    pub temperature: f64,
    /// Multiplier on each precision matrix (1.0 when disabled).
    pub hartlap: Vec<f64>,
    pub config: CalibrationConfig,
    pub provenance: BTreeMap<String, String>,
}

/// Discrete posterior for one map.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    pub map_id: String,
    pub weights: Vec<f64>,
    pub mean: Vec2,
    pub sigma: Vec2,
    /// Ensemble member weights, when the prediction was an ensemble average.
    pub ensemble_weights: Option<Vec<f64>>,
    /// Set when every likelihood underflowed and the weights fell back to
    /// the uniform prior.
    pub underflow: bool,
}

impl PosteriorResult {
    pub fn top_index(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bw), (i, &w)| if w > bw { (i, w) } else { (bi, bw) })
            .0
    }

    /// Shannon entropy of the grid weights, in nats.
    pub fn entropy(&self) -> f64 {
        -self.weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>()
    }
}

/// Ground-truth label for a map, used by scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub map_id: String,
    pub theta: Vec2,
}
