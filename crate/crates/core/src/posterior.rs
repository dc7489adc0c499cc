//! Grid posterior under a uniform prior, and NLL-based ensemble weighting.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{CalibratedLikelihood, PosteriorResult, PredictionKind, PredictionSet};
use crate::numeric::{cholesky2, forward_substitute, log_sum_exp, mean, softmax};
use crate::{Mat2, Vec2};

/// Per-map marginal log-likelihoods below this value are clamped before
/// averaging, so one catastrophic map down-weights a member without zeroing
/// it.
pub const MARGINAL_LOG_FLOOR: f64 = -700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PosteriorError {
    #[error("covariance at grid point {grid_index} is not positive definite")]
    NotPositiveDefinite { grid_index: usize },
    #[error("grid index {grid_index} out of range for a grid of {len} points")]
    IndexOutOfRange { grid_index: usize, len: usize },
    #[error("every grid likelihood underflowed")]
    AllWeightsUnderflow,
    #[error("expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    Empty,
    #[error("non-finite NLL for member index {index}")]
    NonFiniteNll { index: usize },
    #[error("map '{map_id}' does not have exactly one prediction from every member")]
    InconsistentMembers { map_id: String },
    #[error("inference needs a test set")]
    NotTest,
}

/// Precomputed precision matrices and normalizations for every grid point.
#[derive(Debug, Clone)]
pub struct GridLikelihood<'a> {
    model: &'a CalibratedLikelihood,
    lower: Vec<Mat2>,
    log_norm: Vec<f64>,
}

impl<'a> GridLikelihood<'a> {
    pub fn new(model: &'a CalibratedLikelihood) -> Result<Self, PosteriorError> {
        let mut lower = Vec::with_capacity(model.moments.len());
        let mut log_norm = Vec::with_capacity(model.moments.len());
        for (m, &alpha) in model.moments.iter().zip(&model.hartlap) {
            let l = cholesky2(&m.cov).ok_or(PosteriorError::NotPositiveDefinite { grid_index: m.grid_index })?;
            let log_det = 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln());
            // -½ log det(2π Σ) in two dimensions.
            let mut norm = -(2.0 * PI).ln() - 0.5 * log_det;
            if model.config.hartlap_in_normalization {
                norm += alpha.ln();
            }
            lower.push(l);
            log_norm.push(norm);
        }
        Ok(Self { model, lower, log_norm })
    }

    pub fn model(&self) -> &CalibratedLikelihood {
        self.model
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Log density of `pred` at grid point `g`, with the Hartlap factor on
    /// the quadratic form.
    pub fn log_likelihood(&self, pred: &Vec2, g: usize) -> f64 {
        let z = forward_substitute(&self.lower[g], &(pred - self.model.moments[g].mean));
        -0.5 * self.model.hartlap[g] * z.norm_squared() + self.log_norm[g]
    }

    pub fn log_likelihoods(&self, pred: &Vec2) -> Vec<f64> {
        (0..self.len()).map(|g| self.log_likelihood(pred, g)).collect()
    }

    pub fn posterior(&self, map_id: &str, pred: &Vec2) -> Result<PosteriorResult, PosteriorError> {
        let weights = softmax(&self.log_likelihoods(pred)).ok_or(PosteriorError::AllWeightsUnderflow)?;
        Ok(summarize(map_id, weights, self.model, false))
    }

    /// Like [`posterior`](Self::posterior), but falls back to the uniform
    /// prior (flagged as underflow) when every likelihood underflows.
    pub fn posterior_or_prior(&self, map_id: &str, pred: &Vec2) -> PosteriorResult {
        match softmax(&self.log_likelihoods(pred)) {
            Some(weights) => summarize(map_id, weights, self.model, false),
            None => {
                let g = self.len();
                summarize(map_id, vec![1.0 / g as f64; g], self.model, true)
            }
        }
    }

    /// `log[(1/G) Σ_g N(pred; μ_g, Σ_g)]`.
    pub fn log_marginal(&self, pred: &Vec2) -> f64 {
        log_sum_exp(&self.log_likelihoods(pred)) - (self.len() as f64).ln()
    }
}

fn summarize(map_id: &str, weights: Vec<f64>, model: &CalibratedLikelihood, underflow: bool) -> PosteriorResult {
    let pts = model.grid.points();
    let mut mean = Vec2::zeros();
    for (w, p) in weights.iter().zip(pts) {
        mean += *w * p;
    }
    let mut var = Vec2::zeros();
    for (w, p) in weights.iter().zip(pts) {
        let d = p - mean;
        var += *w * d.component_mul(&d);
    }
    PosteriorResult {
        map_id: map_id.to_string(),
        weights,
        mean,
        sigma: var.map(|v| v.max(0.0).sqrt()),
        ensemble_weights: None,
        underflow,
    }
}

/// Log density of `pred` at grid point `g` of `model`.
pub fn log_likelihood(pred: &Vec2, model: &CalibratedLikelihood, g: usize) -> Result<f64, PosteriorError> {
    let m = model
        .moments
        .get(g)
        .ok_or(PosteriorError::IndexOutOfRange { grid_index: g, len: model.moments.len() })?;
    let l = cholesky2(&m.cov).ok_or(PosteriorError::NotPositiveDefinite { grid_index: g })?;
    let alpha = model.hartlap[g];
    let z = forward_substitute(&l, &(pred - m.mean));
    let log_det = 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln());
    let mut norm = -(2.0 * PI).ln() - 0.5 * log_det;
    if model.config.hartlap_in_normalization {
        norm += alpha.ln();
    }
    Ok(-0.5 * alpha * z.norm_squared() + norm)
}

/// Normalized grid weights, posterior mean and marginal standard deviations
/// for a single prediction.
pub fn grid_posterior(pred: &Vec2, model: &CalibratedLikelihood) -> Result<PosteriorResult, PosteriorError> {
    GridLikelihood::new(model)?.posterior("", pred)
}

/// `-(1/N) Σ_i log p(pred_i)` with the marginal over a uniform grid prior.
/// Per-map values below `floor` are clamped to it when a floor is given.
pub fn member_marginal_nll(
    member_preds: &[Vec2],
    likelihood: &GridLikelihood<'_>,
    floor: Option<f64>,
) -> Result<f64, PosteriorError> {
    if member_preds.is_empty() {
        return Err(PosteriorError::Empty);
    }
    let per_map: Vec<f64> = member_preds
        .iter()
        .map(|p| {
            let lm = likelihood.log_marginal(p);
            match floor {
                Some(f) if !(lm >= f) => f,
                _ => lm,
            }
        })
        .collect();
    Ok(-mean(&per_map))
}

/// Softmax of `-NLL_m`.
pub fn ensemble_weights(nlls: &[f64]) -> Result<Vec<f64>, PosteriorError> {
    if nlls.is_empty() {
        return Err(PosteriorError::Empty);
    }
    if let Some(index) = nlls.iter().position(|v| !v.is_finite()) {
        return Err(PosteriorError::NonFiniteNll { index });
    }
    let neg: Vec<f64> = nlls.iter().map(|v| -v).collect();
    softmax(&neg).ok_or(PosteriorError::Empty)
}

/// Weighted average of member predictions for one map.
pub fn ensemble_predict(member_preds: &[Vec2], weights: &[f64]) -> Result<Vec2, PosteriorError> {
    if member_preds.len() != weights.len() {
        return Err(PosteriorError::ShapeMismatch { expected: weights.len(), actual: member_preds.len() });
    }
    if member_preds.is_empty() {
        return Err(PosteriorError::Empty);
    }
    let mut acc = Vec2::zeros();
    for (p, w) in member_preds.iter().zip(weights) {
        acc += *w * p;
    }
    Ok(acc)
}

/// Output of [`infer_batch`].
#[derive(Debug, Clone)]
pub struct InferenceBatch {
    /// One result per map, ordered by map id.
    pub results: Vec<PosteriorResult>,
    /// Sorted member ids.
    pub members: Vec<u32>,
    pub nlls: Vec<f64>,
    pub ensemble_weights: Vec<f64>,
}

impl InferenceBatch {
    pub fn any_underflow(&self) -> bool {
        self.results.iter().any(|r| r.underflow)
    }
}

/// Ensemble-weighted grid posteriors for every test map.
///
/// Member NLLs are computed once over the whole test set. Maps whose
/// likelihoods all underflow fall back to the uniform prior and are flagged.
pub fn infer_batch(test: &PredictionSet, model: &CalibratedLikelihood) -> Result<InferenceBatch, PosteriorError> {
    if test.kind != PredictionKind::Test {
        return Err(PosteriorError::NotTest);
    }
    if test.records.is_empty() {
        return Err(PosteriorError::Empty);
    }
    let members = test.members();
    let mut by_map: BTreeMap<&str, BTreeMap<u32, Vec2>> = BTreeMap::new();
    for r in &test.records {
        let entry = by_map.entry(r.map_id.as_str()).or_default();
        if entry.insert(r.member_id, r.pred).is_some() {
            return Err(PosteriorError::InconsistentMembers { map_id: r.map_id.clone() });
        }
    }
    for (map_id, preds) in &by_map {
        if preds.len() != members.len() {
            return Err(PosteriorError::InconsistentMembers { map_id: map_id.to_string() });
        }
    }
    // by_map values are keyed by member id, so iteration order matches `members`.
    let table: Vec<(&str, Vec<Vec2>)> = by_map
        .iter()
        .map(|(id, preds)| (*id, preds.values().copied().collect()))
        .collect();

    let likelihood = GridLikelihood::new(model)?;
    let nlls = (0..members.len())
        .into_par_iter()
        .map(|m| {
            let column: Vec<Vec2> = table.iter().map(|(_, preds)| preds[m]).collect();
            member_marginal_nll(&column, &likelihood, Some(MARGINAL_LOG_FLOOR))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let weights = ensemble_weights(&nlls)?;

    let results = table
        .par_iter()
        .map(|(map_id, preds)| {
            let ens = ensemble_predict(preds, &weights)?;
            let mut result = likelihood.posterior_or_prior(map_id, &ens);
            result.ensemble_weights = Some(weights.clone());
            Ok(result)
        })
        .collect::<Result<Vec<_>, PosteriorError>>()?;

    Ok(InferenceBatch { results, members, nlls, ensemble_weights: weights })
}
