//! Evaluate the calibrated grid posterior for single predictions on a
//! hand-built 3×3 model.
//!
//! cargo run --example grid_posterior

use std::collections::BTreeMap;

use lenslike::grid::{CalibratedLikelihood, CalibrationConfig, CosmologyGrid, MomentEntry};
use lenslike::posterior::GridLikelihood;
use lenslike::{Mat2, Vec2};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let points: Vec<Vec2> = (0..9).map(|k| Vec2::new(0.2 + 0.1 * (k / 3) as f64, 0.7 + 0.1 * (k % 3) as f64)).collect();
    let grid = CosmologyGrid::new(points)?;
    let cov = Mat2::new(0.03f64.powi(2), -0.0003, -0.0003, 0.04f64.powi(2));
    let moments = grid
        .points()
        .iter()
        .enumerate()
        .map(|(g, p)| MomentEntry { grid_index: g, mean: *p, cov, n_samples: 256 })
        .collect();
    let model = CalibratedLikelihood {
        grid: grid.clone(),
        moments,
        temperature: 1.0,
        hartlap: vec![252.0 / 255.0; grid.len()],
        config: CalibrationConfig::default(),
        provenance: BTreeMap::new(),
    };
    let lik = GridLikelihood::new(&model)?;

    for pred in [Vec2::new(0.3, 0.8), Vec2::new(0.27, 0.83), Vec2::new(0.45, 0.95), Vec2::new(5.0, 5.0), Vec2::new(1e200, 1e200)] {
        let r = lik.posterior_or_prior("demo", &pred);
        println!(
            "pred ({:.3e}, {:.3e}) -> mean ({:.4}, {:.4}) sigma ({:.4}, {:.4}) top {} entropy {:.3}{}",
            pred.x,
            pred.y,
            r.mean.x,
            r.mean.y,
            r.sigma.x,
            r.sigma.y,
            r.top_index(),
            r.entropy(),
            if r.underflow { " [prior fallback]" } else { "" }
        );
    }
    Ok(())
}
