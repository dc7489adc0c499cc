//! Independent reference implementations used by the integration tests.
//! Nothing here calls the library's numerics.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use lenslike::grid::{CalibratedLikelihood, PredictionRecord};
use lenslike::pipeline::synthetic::{GridSpec, MomentSpec, SyntheticSpec};
use ndarray::Array2;
use rustfft::num_complex::Complex64;

/// Small synthetic spec on a `rows × cols` lattice.
pub fn small_spec(rows: usize, cols: usize, members: usize, test_maps: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        grid: GridSpec::Lattice { rows, cols, omega_m: [0.2, 0.4], s8: [0.7, 0.9] },
        moments: MomentSpec::Uniform { sigma: [0.04, 0.05], correlation: 0.2, mean_shrink: 0.1 },
        members,
        samples_per_point: 12 * members,
        test_maps,
        seed,
    }
}

fn inv2(c: [[f64; 2]; 2]) -> ([[f64; 2]; 2], f64) {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    ([[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]], det)
}

fn gauss_ll(x: [f64; 2], mu: [f64; 2], cov: [[f64; 2]; 2], alpha: f64) -> f64 {
    let (p, det) = inv2(cov);
    let r = [x[0] - mu[0], x[1] - mu[1]];
    let q = r[0] * (p[0][0] * r[0] + p[0][1] * r[1]) + r[1] * (p[1][0] * r[0] + p[1][1] * r[1]);
    -0.5 * alpha * q - (2.0 * PI).ln() - 0.5 * det.ln()
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Straight-line ensemble inference: explicit 2×2 inverses, plain loops.
/// Returns posterior means keyed by map id.
pub fn brute_force_infer(model: &CalibratedLikelihood, test: &[PredictionRecord]) -> BTreeMap<String, [f64; 2]> {
    let g_count = model.moments.len();
    let mut members: Vec<u32> = test.iter().map(|r| r.member_id).collect();
    members.sort();
    members.dedup();
    let mut maps: BTreeMap<String, BTreeMap<u32, [f64; 2]>> = BTreeMap::new();
    for r in test {
        maps.entry(r.map_id.clone()).or_default().insert(r.member_id, [r.pred.x, r.pred.y]);
    }
    let ll_row = |x: [f64; 2]| -> Vec<f64> {
        (0..g_count)
            .map(|g| {
                let m = &model.moments[g];
                let cov = [[m.cov[(0, 0)], m.cov[(0, 1)]], [m.cov[(1, 0)], m.cov[(1, 1)]]];
                gauss_ll(x, [m.mean.x, m.mean.y], cov, model.hartlap[g])
            })
            .collect()
    };
    let mut nll = Vec::new();
    for m in &members {
        let mut total = 0.0;
        for preds in maps.values() {
            let lm = lse(&ll_row(preds[m])) - (g_count as f64).ln();
            total += lm.max(-700.0);
        }
        nll.push(-total / maps.len() as f64);
    }
    let neg: Vec<f64> = nll.iter().map(|v| -v).collect();
    let z = lse(&neg);
    let w: Vec<f64> = neg.iter().map(|v| (v - z).exp()).collect();

    let mut out = BTreeMap::new();
    for (id, preds) in &maps {
        let mut ens = [0.0, 0.0];
        for (k, m) in members.iter().enumerate() {
            ens[0] += w[k] * preds[m][0];
            ens[1] += w[k] * preds[m][1];
        }
        let ll = ll_row(ens);
        let z = lse(&ll);
        let mut mean = [0.0, 0.0];
        for (g, l) in ll.iter().enumerate() {
            let p = model.grid.point(g);
            let wg = (l - z).exp();
            mean[0] += wg * p.x;
            mean[1] += wg * p.y;
        }
        out.insert(id.clone(), mean);
    }
    out
}

/// Inverse DFT by the defining double sum, normalized by 1/(HW).
pub fn naive_inverse_dft(spec: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = spec.dim();
    let n = (h * w) as f64;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for ky in 0..h {
            for kx in 0..w {
                let phase = 2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                acc += spec[(ky, kx)] * Complex64::from_polar(1.0, phase);
            }
        }
        acc / n
    })
}

/// Circular convolution by direct summation.
pub fn direct_circular_convolve(field: &Array2<f64>, kernel: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = field.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for u in 0..h {
            for v in 0..w {
                acc += field[(u, v)] * kernel[((y + h - u) % h, (x + w - v) % w)];
            }
        }
        acc
    })
}

/// Median over points of the distance to the k-th nearest other point, by
/// exhaustive search.
pub fn brute_force_kth_median(points: &[[f64; 2]], k: usize) -> f64 {
    let mut kth: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k - 1]
        })
        .collect();
    kth.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = kth.len();
    if n % 2 == 1 { kth[n / 2] } else { 0.5 * (kth[n / 2 - 1] + kth[n / 2]) }
}
