//! Draw synthetic validation predictions with known Gaussian errors,
//! calibrate, and compare the recovered moments with the truth.
//!
//! cargo run --example calibrate_synthetic

use lenslike::calibrate::{build_kernel, hartlap_factor};
use lenslike::grid::{bind_predictions, CalibrationConfig, PredictionKind};
use lenslike::pipeline::synthetic::SyntheticSpec;
use lenslike::{calibrate_full, PARAM_DIM};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::default();
    let data = spec.generate()?;
    println!("grid points: {}, validation rows: {}", data.grid.len(), data.validation.len());

    let val = bind_predictions(&data.grid, data.validation, PredictionKind::Validation)?;
    for sigma_bw in [0.25, 1.0] {
        let cfg = CalibrationConfig { sigma_bw, ..Default::default() };
        let model = calibrate_full(&val, &cfg)?;
        let kernel = build_kernel(&data.grid, sigma_bw)?;
        // Average relative error of the calibrated variances against the generator.
        let mut rel = 0.0;
        for (m, truth) in model.moments.iter().zip(&data.covs) {
            rel += ((m.cov[(0, 0)] - truth[(0, 0)]) / truth[(0, 0)]).abs();
        }
        rel /= model.moments.len() as f64;
        println!(
            "sigma_bw {sigma_bw:>4}: bandwidth {:.4} (med5 {:.4}), tau {:.4}, mean |rel err| of var(omega_m) {:.3}",
            kernel.bandwidth, kernel.med5, model.temperature, rel
        );
    }

    println!("Hartlap factor for 256 samples: {:.6}", hartlap_factor(256, PARAM_DIM)?);
    match hartlap_factor(4, PARAM_DIM) {
        Ok(a) => println!("unexpected factor {a}"),
        Err(e) => println!("4 samples: {e}"),
    }
    Ok(())
}
