//! Competition score, summary metrics and hyperparameter search.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::calibrate_full;
use crate::grid::{group_by_cosmology, CalibrationConfig, CosmologyGrid, PosteriorResult, PredictionSet, TruthRecord};
use crate::numeric::{mean, pairwise_sum};
use crate::posterior::GridLikelihood;
use crate::Vec2;

/// Reported standard deviations are floored here before scoring.
pub const SIGMA_FLOOR: f64 = 1e-4;
/// Weight of the squared-error term in the score.
pub const DEFAULT_LAMBDA: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("reported sigma must be positive, got ({0}, {1})")]
    NonPositiveSigma(f64, f64),
    #[error("no truth for map '{0}'")]
    MissingTruth(String),
    #[error("truth for map '{map_id}' is not on the grid")]
    TruthNotOnGrid { map_id: String },
    #[error("no results to score")]
    Empty,
    #[error("search space is empty")]
    EmptySearchSpace,
    #[error("every candidate failed; first error: {0}")]
    AllCandidatesFailed(String),
    #[error("validation set needs records in both folds at every grid point")]
    DegenerateFolds,
}

/// `-[Σ_a e_a²/σ_a² + Σ_a log σ_a² + λ Σ_a e_a²]` over both parameters.
pub fn score_single(estimate: &Vec2, sigma: &Vec2, truth: &Vec2, lambda: f64) -> Result<f64, ScoreError> {
    if !(sigma.x > 0.0 && sigma.y > 0.0) {
        return Err(ScoreError::NonPositiveSigma(sigma.x, sigma.y));
    }
    let e = estimate - truth;
    let e2 = e.component_mul(&e);
    let s2 = sigma.component_mul(sigma);
    Ok(-(e2.x / s2.x + e2.y / s2.y + s2.x.ln() + s2.y.ln() + lambda * (e2.x + e2.y)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosmologyScore {
    pub grid_index: usize,
    pub omega_m: f64,
    pub s8: f64,
    pub mean_score: f64,
    pub standard_error: f64,
    pub n_maps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mean_score: f64,
    /// Squared error with each parameter divided by its range over the grid.
    pub mse: f64,
    /// Fraction of scalar parameters within ±1σ of the truth.
    pub coverage: f64,
    pub n_maps: usize,
    pub lambda: f64,
    pub per_cosmology: Vec<CosmologyScore>,
}

struct ScoredMap {
    grid_index: usize,
    score: f64,
    norm_sq_err: f64,
    covered: usize,
}

fn score_map(result: &PosteriorResult, truth: &Vec2, grid_index: usize, ranges: &Vec2, lambda: f64) -> ScoredMap {
    let sigma = result.sigma.map(|s| s.max(SIGMA_FLOOR));
    let score = score_single(&result.mean, &sigma, truth, lambda).expect("sigma floored above zero");
    let e = result.mean - truth;
    let nx = e.x / ranges.x;
    let ny = e.y / ranges.y;
    let covered = usize::from(e.x.abs() <= sigma.x) + usize::from(e.y.abs() <= sigma.y);
    ScoredMap { grid_index, score, norm_sq_err: 0.5 * (nx * nx + ny * ny), covered }
}

fn build_report(grid: &CosmologyGrid, maps: Vec<ScoredMap>, lambda: f64) -> Result<ScoreReport, ScoreError> {
    if maps.is_empty() {
        return Err(ScoreError::Empty);
    }
    let scores: Vec<f64> = maps.iter().map(|m| m.score).collect();
    let errs: Vec<f64> = maps.iter().map(|m| m.norm_sq_err).collect();
    let covered: usize = maps.iter().map(|m| m.covered).sum();

    let mut by_point: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for m in &maps {
        by_point.entry(m.grid_index).or_default().push(m.score);
    }
    let per_cosmology = by_point
        .into_iter()
        .map(|(g, s)| {
            let n = s.len();
            let mu = mean(&s);
            let se = if n > 1 {
                let ss = pairwise_sum(&s.iter().map(|v| (v - mu) * (v - mu)).collect::<Vec<_>>());
                (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            let p = grid.point(g);
            CosmologyScore { grid_index: g, omega_m: p.x, s8: p.y, mean_score: mu, standard_error: se, n_maps: n }
        })
        .collect();

    Ok(ScoreReport {
        mean_score: mean(&scores),
        mse: mean(&errs),
        coverage: covered as f64 / (2 * maps.len()) as f64,
        n_maps: maps.len(),
        lambda,
        per_cosmology,
    })
}

fn safe_ranges(grid: &CosmologyGrid) -> Vec2 {
    grid.ranges().map(|r| if r > 0.0 { r } else { 1.0 })
}

/// Mean score, normalized MSE, ±1σ coverage and the per-cosmology breakdown.
///
/// Truth labels must lie on `grid`. Reported sigmas are floored at
/// [`SIGMA_FLOOR`].
pub fn evaluate(
    results: &[PosteriorResult],
    truths: &[TruthRecord],
    grid: &CosmologyGrid,
    lambda: f64,
) -> Result<ScoreReport, ScoreError> {
    let lookup: HashMap<&str, &Vec2> = truths.iter().map(|t| (t.map_id.as_str(), &t.theta)).collect();
    let ranges = safe_ranges(grid);
    let maps = results
        .iter()
        .map(|r| {
            let truth = lookup.get(r.map_id.as_str()).ok_or_else(|| ScoreError::MissingTruth(r.map_id.clone()))?;
            let g = grid.locate(truth).ok_or_else(|| ScoreError::TruthNotOnGrid { map_id: r.map_id.clone() })?;
            Ok(score_map(r, truth, g, &ranges, lambda))
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    build_report(grid, maps, lambda)
}

/// Candidate lists for each hyperparameter; the search space is their
/// Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub sigma_bw: Vec<f64>,
    pub lambda_lw: Vec<f64>,
    pub p_dof: Vec<f64>,
    #[serde(default = "default_hartlap")]
    pub hartlap_enabled: Vec<bool>,
    #[serde(default = "default_jitters")]
    pub cov_jitter: Vec<f64>,
}

fn default_hartlap() -> Vec<bool> {
    vec![true]
}

fn default_jitters() -> Vec<f64> {
    vec![CalibrationConfig::default().cov_jitter]
}

impl SearchSpace {
    pub fn candidates(&self) -> Vec<CalibrationConfig> {
        let mut out = Vec::new();
        for &sigma_bw in &self.sigma_bw {
            for &lambda_lw in &self.lambda_lw {
                for &p_dof in &self.p_dof {
                    for &hartlap_enabled in &self.hartlap_enabled {
                        for &cov_jitter in &self.cov_jitter {
                            out.push(CalibrationConfig {
                                sigma_bw,
                                lambda_lw,
                                p_dof,
                                hartlap_enabled,
                                cov_jitter,
                                hartlap_in_normalization: false,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    /// Position in the input candidate list.
    pub index: usize,
    pub config: CalibrationConfig,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: CalibrationConfig,
    pub best_score: f64,
    /// Report over the held-out predictions of both folds for `best`.
    pub report: ScoreReport,
    /// Every candidate, best first. Failed candidates come last.
    pub table: Vec<CandidateRow>,
}

/// Two folds of a validation set. With two or more members the split is by
/// member (alternating over sorted ids); with one member, records alternate
/// within each grid point.
pub fn split_folds(val: &PredictionSet) -> (PredictionSet, PredictionSet) {
    let members = val.members();
    if members.len() >= 2 {
        let fold_of: HashMap<u32, usize> = members.iter().enumerate().map(|(i, m)| (*m, i % 2)).collect();
        (val.filtered(|r| fold_of[&r.member_id] == 0), val.filtered(|r| fold_of[&r.member_id] == 1))
    } else {
        let mut seen: HashMap<Option<usize>, usize> = HashMap::new();
        let assignment: Vec<usize> = val
            .records
            .iter()
            .map(|r| {
                let c = seen.entry(r.grid_index).or_insert(0);
                let fold = *c % 2;
                *c += 1;
                fold
            })
            .collect();
        let mut a = val.filtered(|_| false);
        let mut b = val.filtered(|_| false);
        for (r, fold) in val.records.iter().zip(assignment) {
            if fold == 0 { a.records.push(r.clone()) } else { b.records.push(r.clone()) }
        }
        (a, b)
    }
}

fn held_out_scores(
    fit: &PredictionSet,
    held_out: &PredictionSet,
    cfg: &CalibrationConfig,
    lambda: f64,
) -> Result<Vec<ScoredMap>, String> {
    let model = calibrate_full(fit, cfg).map_err(|e| e.to_string())?;
    let likelihood = GridLikelihood::new(&model).map_err(|e| e.to_string())?;
    let ranges = safe_ranges(&fit.grid);
    Ok(held_out
        .records
        .iter()
        .filter_map(|r| r.grid_index.map(|g| (g, r)))
        .map(|(g, r)| {
            let post = likelihood.posterior_or_prior(&r.map_id, &r.pred);
            score_map(&post, &fit.grid.point(g), g, &ranges, lambda)
        })
        .collect())
}

/// Cross-fold report for one configuration: calibrate on each fold, score
/// the other, pool the held-out maps.
pub fn cross_fold_report(
    folds: &(PredictionSet, PredictionSet),
    cfg: &CalibrationConfig,
    lambda: f64,
) -> Result<ScoreReport, String> {
    let mut maps = held_out_scores(&folds.0, &folds.1, cfg, lambda)?;
    maps.extend(held_out_scores(&folds.1, &folds.0, cfg, lambda)?);
    build_report(&folds.0.grid, maps, lambda).map_err(|e| e.to_string())
}

/// Exhaustive search for the configuration with the best cross-fold mean
/// score. Ties go to the lexicographically smallest configuration, then to
/// the earliest candidate.
pub fn tune_calibration(
    val: &PredictionSet,
    candidates: &[CalibrationConfig],
    lambda: f64,
) -> Result<TuneOutcome, ScoreError> {
    if candidates.is_empty() {
        return Err(ScoreError::EmptySearchSpace);
    }
    let folds = split_folds(val);
    let groups_a = group_by_cosmology(&folds.0);
    let groups_b = group_by_cosmology(&folds.1);
    if groups_a.is_empty() || groups_b.is_empty() {
        return Err(ScoreError::DegenerateFolds);
    }

    let evaluated: Vec<Result<ScoreReport, String>> =
        candidates.par_iter().map(|cfg| cross_fold_report(&folds, cfg, lambda)).collect();

    let mut table: Vec<CandidateRow> = candidates
        .iter()
        .zip(&evaluated)
        .enumerate()
        .map(|(index, (config, res))| CandidateRow {
            index,
            config: *config,
            score: res.as_ref().ok().map(|r| r.mean_score).filter(|s| !s.is_nan()),
            error: res.as_ref().err().cloned(),
        })
        .collect();
    table.sort_by(|a, b| {
        let by_score = match (a.score, b.score) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        by_score.then(a.config.lexicographic_cmp(&b.config)).then(a.index.cmp(&b.index))
    });

    let top = &table[0];
    let Some(best_score) = top.score else {
        let first = evaluated.iter().find_map(|r| r.as_ref().err().cloned()).unwrap_or_default();
        return Err(ScoreError::AllCandidatesFailed(first));
    };
    let report = evaluated[top.index].clone().expect("scored candidate has a report");
    Ok(TuneOutcome { best: top.config, best_score, report, table })
}
