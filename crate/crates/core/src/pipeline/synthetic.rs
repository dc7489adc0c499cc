//! Seeded synthetic validation and test predictions drawn from known
//! per-point Gaussians.
//!
//! Random numbers come from ChaCha20 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`; validation draws use stream 1 and test draws
//! stream 2. Normal deviates use `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CosmologyGrid, RawRecord, TruthRecord};
use crate::numeric::cholesky2;
use crate::{Mat2, Vec2};

/// Identity of the generator, written into file headers.
pub const GENERATOR: &str = "chacha20(rand_chacha-0.9)+standard-normal(rand_distr-0.5)";

const VALIDATION_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    /// First `count` points of the base-(2, 3) Halton sequence scaled to the
    /// given ranges.
    Halton { count: usize, omega_m: [f64; 2], s8: [f64; 2] },
    Lattice { rows: usize, cols: usize, omega_m: [f64; 2], s8: [f64; 2] },
    Points { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MomentSpec {
    /// Same covariance everywhere; the mean is pulled toward the grid centre
    /// by `mean_shrink`.
    Uniform {
        sigma: [f64; 2],
        correlation: f64,
        #[serde(default)]
        mean_shrink: f64,
    },
    /// One mean and covariance per grid point, in grid index order.
    Explicit { means: Vec<[f64; 2]>, covs: Vec<[[f64; 2]; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub grid: GridSpec,
    pub moments: MomentSpec,
    pub members: usize,
    pub samples_per_point: usize,
    pub test_maps: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            grid: GridSpec::Halton { count: 101, omega_m: [0.1, 0.5], s8: [0.6, 1.0] },
            moments: MomentSpec::Uniform { sigma: [0.03, 0.03], correlation: -0.3, mean_shrink: 0.1 },
            members: 1,
            samples_per_point: 256,
            test_maps: 1000,
            seed: 42,
        }
    }
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn lerp(range: [f64; 2], t: f64) -> f64 {
    range[0] + (range[1] - range[0]) * t
}

impl GridSpec {
    pub fn build(&self) -> Result<CosmologyGrid, SyntheticError> {
        let pts: Vec<Vec2> = match self {
            GridSpec::Halton { count, omega_m, s8 } => {
                (1..=*count).map(|i| Vec2::new(lerp(*omega_m, halton(i, 2)), lerp(*s8, halton(i, 3)))).collect()
            }
            GridSpec::Lattice { rows, cols, omega_m, s8 } => {
                let t = |k: usize, n: usize| if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                (0..rows * cols)
                    .map(|k| Vec2::new(lerp(*omega_m, t(k / cols, *rows)), lerp(*s8, t(k % cols, *cols))))
                    .collect()
            }
            GridSpec::Points { points } => points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        };
        CosmologyGrid::new(pts).map_err(|e| SyntheticError::Invalid(e.to_string()))
    }
}

/// Generated data plus the true generating moments.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub grid: CosmologyGrid,
    pub means: Vec<Vec2>,
    pub covs: Vec<Mat2>,
    pub validation: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
    pub truths: Vec<TruthRecord>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::Invalid(m.to_string()));
        if self.members == 0 {
            return bad("members must be >= 1");
        }
        if self.samples_per_point < 2 {
            return bad("samples_per_point must be >= 2");
        }
        if let MomentSpec::Uniform { sigma, correlation, mean_shrink } = &self.moments {
            if !(sigma[0] > 0.0 && sigma[1] > 0.0) || !(correlation.abs() < 1.0) {
                return bad("generating covariance must be positive definite");
            }
            if !(0.0..=1.0).contains(mean_shrink) {
                return bad("mean_shrink must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Generating moments `(μ*_g, Σ*_g)` for every grid point.
    pub fn generating_moments(&self, grid: &CosmologyGrid) -> Result<(Vec<Vec2>, Vec<Mat2>), SyntheticError> {
        match &self.moments {
            MomentSpec::Uniform { sigma, correlation, mean_shrink } => {
                let pts = grid.points();
                let lo = pts.iter().fold(pts[0], |a, p| a.inf(p));
                let hi = pts.iter().fold(pts[0], |a, p| a.sup(p));
                let centre = 0.5 * (lo + hi);
                let off = correlation * sigma[0] * sigma[1];
                let cov = Mat2::new(sigma[0] * sigma[0], off, off, sigma[1] * sigma[1]);
                let means = pts.iter().map(|p| centre + (1.0 - mean_shrink) * (p - centre)).collect();
                Ok((means, vec![cov; grid.len()]))
            }
            MomentSpec::Explicit { means, covs } => {
                if means.len() != grid.len() || covs.len() != grid.len() {
                    return Err(SyntheticError::Invalid(format!(
                        "explicit moments need {} means and covariances",
                        grid.len()
                    )));
                }
                let covs: Vec<Mat2> = covs.iter().map(|c| Mat2::new(c[0][0], c[0][1], c[1][0], c[1][1])).collect();
                for (g, c) in covs.iter().enumerate() {
                    if c[(0, 1)] != c[(1, 0)] || cholesky2(c).is_none() {
                        return Err(SyntheticError::Invalid(format!(
                            "covariance at grid point {g} is not symmetric positive definite"
                        )));
                    }
                }
                Ok((means.iter().map(|m| Vec2::new(m[0], m[1])).collect(), covs))
            }
        }
    }

    pub fn generate(&self) -> Result<SyntheticData, SyntheticError> {
        self.validate()?;
        let grid = self.grid.build()?;
        let (means, covs) = self.generating_moments(&grid)?;
        let factors: Vec<Mat2> = covs.iter().map(|c| cholesky2(c).expect("validated PD")).collect();
        let draw = |rng: &mut ChaCha20Rng, g: usize| -> Vec2 {
            let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            means[g] + factors[g] * z
        };

        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(VALIDATION_STREAM);
        let mut validation = Vec::with_capacity(grid.len() * self.samples_per_point);
        for g in 0..grid.len() {
            for r in 0..self.samples_per_point {
                validation.push(RawRecord {
                    member_id: (r % self.members) as u32,
                    map_id: format!("val-{g:04}-{r:05}"),
                    truth: Some(grid.point(g)),
                    pred: draw(&mut rng, g),
                });
            }
        }

        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(TEST_STREAM);
        let mut test = Vec::with_capacity(self.test_maps * self.members);
        let mut truths = Vec::with_capacity(self.test_maps);
        for t in 0..self.test_maps {
            let g = rng.random_range(0..grid.len());
            let map_id = format!("test-{t:06}");
            for m in 0..self.members {
                test.push(RawRecord { member_id: m as u32, map_id: map_id.clone(), truth: None, pred: draw(&mut rng, g) });
            }
            truths.push(TruthRecord { map_id, theta: grid.point(g) });
        }
        Ok(SyntheticData { grid, means, covs, validation, test, truths })
    }
}
