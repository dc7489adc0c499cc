//! The score rewards honest uncertainties: for a fixed error it peaks at
//! sigma = |error|. Then a small hyperparameter search picks the
//! calibration with the best cross-fold score.
//!
//! cargo run --example score_and_tune

use lenslike::grid::{bind_predictions, PredictionKind};
use lenslike::pipeline::synthetic::{GridSpec, SyntheticSpec};
use lenslike::scoring::{SearchSpace, DEFAULT_LAMBDA};
use lenslike::{score_single, tune_calibration, Vec2};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = Vec2::new(0.3, 0.8);
    let est = Vec2::new(0.32, 0.79);
    println!("error = (0.02, -0.01)");
    for s in [0.005, 0.01, 0.02, 0.04, 0.08] {
        let score = score_single(&est, &Vec2::new(s, 0.01), &truth, DEFAULT_LAMBDA)?;
        println!("  sigma_omega_m {s:<6} score {score:.4}");
    }

    let spec = SyntheticSpec {
        grid: GridSpec::Halton { count: 40, omega_m: [0.1, 0.5], s8: [0.6, 1.0] },
        members: 2,
        samples_per_point: 32,
        ..Default::default()
    };
    let data = spec.generate()?;
    let val = bind_predictions(&data.grid, data.validation, PredictionKind::Validation)?;
    let space = SearchSpace {
        sigma_bw: vec![0.25, 0.5, 1.0],
        lambda_lw: vec![0.0, 0.1, 0.5],
        p_dof: vec![2.0],
        hartlap_enabled: vec![true],
        cov_jitter: vec![1e-10],
    };
    let outcome = tune_calibration(&val, &space.candidates(), DEFAULT_LAMBDA)?;
    println!("\nrank  sigma_bw  lambda_lw  score");
    for (rank, row) in outcome.table.iter().enumerate() {
        let score = row.score.map_or("failed".to_string(), |s| format!("{s:.4}"));
        println!("{:>4}  {:>8}  {:>9}  {score}", rank + 1, row.config.sigma_bw, row.config.lambda_lw);
    }
    println!(
        "best: sigma_bw {} lambda_lw {} (coverage {:.3})",
        outcome.best.sigma_bw, outcome.best.lambda_lw, outcome.report.coverage
    );
    Ok(())
}
