//! Scattering-covariance features of smooth random fields at two
//! correlation lengths, reduced isotropically and projected with PCA.
//!
//! cargo run --release --example scattering_features

use lenslike::d4::Map2D;
use lenslike::scattering::{build_bank, isotropic_dimension, isotropic_reduce, pca_fit_transform, scattering_cov, Fft2};
use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

/// White noise low-passed with a Gaussian of width `ell` pixels.
fn smooth_field(n: usize, ell: f64, seed: u64) -> Map2D {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let fft = Fft2::new((n, n));
    let mut a = Array2::from_shape_fn((n, n), |_| Complex64::new(StandardNormal.sample(&mut rng), 0.0));
    fft.forward(&mut a);
    let k = |i: usize| {
        let i = if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
        2.0 * std::f64::consts::PI * i / n as f64
    };
    for ((i, j), v) in a.indexed_iter_mut() {
        *v *= (-0.5 * ell * ell * (k(i).powi(2) + k(j).powi(2))).exp();
    }
    fft.inverse(&mut a);
    Map2D::unmasked(a.mapv(|c| c.re))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 64;
    let (scales, orientations) = (5, 4);
    let bank = build_bank((n, n), scales, orientations)?;
    let mut rows = Vec::new();
    for (k, ell) in [1.0, 1.0, 1.0, 4.0, 4.0, 4.0].iter().enumerate() {
        let sv = scattering_cov(&smooth_field(n, *ell, k as u64), &bank)?;
        let s2_by_scale: Vec<String> = (0..scales)
            .map(|j| format!("{:.2e}", sv.s2[j * orientations..(j + 1) * orientations].iter().sum::<f64>() / orientations as f64))
            .collect();
        println!("ell {ell}: S2 by scale [{}]", s2_by_scale.join(", "));
        let iso = isotropic_reduce(&sv, false);
        rows.push(iso.iter().map(|v| v.abs().max(1e-30).ln()).collect::<Vec<_>>());
    }
    let d = isotropic_dimension(scales, orientations, false);
    println!("isotropic dimension: {d} (raw flattened: {})", scattering_cov(&smooth_field(n, 1.0, 9), &bank)?.flatten().len());

    let data = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);
    let (_, scores) = pca_fit_transform(&data, 2)?;
    for (i, r) in scores.rows().into_iter().enumerate() {
        println!("field {i}: pc ({:+.3}, {:+.3})", r[0], r[1]);
    }
    Ok(())
}
