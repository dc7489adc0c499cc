//! Three ensemble members, one of them much noisier. The marginal-likelihood
//! weighting should push its weight toward zero.
//!
//! cargo run --example ensemble_weighting

use lenslike::grid::{bind_predictions, CalibrationConfig, PredictionKind};
use lenslike::pipeline::synthetic::SyntheticSpec;
use lenslike::{calibrate_full, infer_batch, Vec2};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec { members: 3, test_maps: 300, ..Default::default() };
    let mut data = spec.generate()?;
    let val = bind_predictions(&data.grid, data.validation, PredictionKind::Validation)?;
    let model = calibrate_full(&val, &CalibrationConfig { sigma_bw: 0.25, ..Default::default() })?;

    // Degrade member 2 on the test set.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.08)?;
    for r in data.test.iter_mut().filter(|r| r.member_id == 2) {
        r.pred += Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
    }

    let test = bind_predictions(&data.grid, data.test, PredictionKind::Test)?;
    let batch = infer_batch(&test, &model)?;
    println!("member  nll        weight");
    for ((m, nll), w) in batch.members.iter().zip(&batch.nlls).zip(&batch.ensemble_weights) {
        println!("{m:>6}  {nll:>9.4}  {w:.6}");
    }
    Ok(())
}
