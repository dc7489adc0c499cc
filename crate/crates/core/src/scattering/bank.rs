use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::fft::{angular_frequencies, Fft2};
use super::ScatteringError;

/// Identifier written next to every scattering vector so vectors from
/// different filter families are never mixed.
pub const FILTER_FAMILY: &str = "morlet-iso-v1";

/// Spatial envelope width of the finest scale, in pixels.
const SIGMA0: f64 = 0.8;
/// Central frequency of the finest scale, in radians per pixel.
const XI0: f64 = 3.0 * PI / 4.0;
/// Periodization range: images at `2π (a, b)` for `|a|, |b| <= ALIASES`.
const ALIASES: i32 = 2;

/// Frequency-domain filters `ψ̂^λ` for `λ = (j, ℓ)`, matched to one map
/// shape. Scale `j` is centred at `XI0 · 2^-j`, orientation `ℓ` at angle
/// `ℓ π / L` measured from the column axis toward the row axis.
#[derive(Debug, Clone)]
pub struct WaveletBank {
    pub shape: (usize, usize),
    pub scales: usize,
    pub orientations: usize,
    /// Indexed by `j * L + ℓ`.
    pub filters: Vec<Array2<Complex64>>,
    pub family: &'static str,
    pub(crate) fft: Fft2,
}

impl WaveletBank {
    pub fn filter(&self, j: usize, l: usize) -> Result<&Array2<Complex64>, ScatteringError> {
        if j >= self.scales || l >= self.orientations {
            return Err(ScatteringError::FilterIndex { j, l });
        }
        Ok(&self.filters[j * self.orientations + l])
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }
}

fn gaussian(kx: f64, ky: f64, sigma: f64) -> f64 {
    (-0.5 * sigma * sigma * (kx * kx + ky * ky)).exp()
}

fn periodized(kx: f64, ky: f64, sigma: f64) -> f64 {
    let tau = 2.0 * PI;
    let mut total = 0.0;
    for a in -ALIASES..=ALIASES {
        for b in -ALIASES..=ALIASES {
            total += gaussian(kx + tau * f64::from(a), ky + tau * f64::from(b), sigma);
        }
    }
    total
}

/// Periodized Morlet response: a Gaussian bump at `ξ e_θ` minus a scaled
/// Gaussian at the origin, so the response at zero frequency vanishes.
fn morlet(shape: (usize, usize), j: usize, theta: f64) -> Array2<Complex64> {
    let sigma = SIGMA0 * 2f64.powi(j as i32);
    let xi = XI0 / 2f64.powi(j as i32);
    let (cx, cy) = (xi * theta.cos(), xi * theta.sin());
    let beta = periodized(-cx, -cy, sigma) / periodized(0.0, 0.0, sigma);
    let ky = angular_frequencies(shape.0);
    let kx = angular_frequencies(shape.1);
    Array2::from_shape_fn(shape, |(r, c)| {
        let v = periodized(kx[c] - cx, ky[r] - cy, sigma) - beta * periodized(kx[c], ky[r], sigma);
        Complex64::new(v, 0.0)
    })
}

/// Build `J × L` filters for maps of `shape = (H, W)`.
pub fn build_bank(shape: (usize, usize), scales: usize, orientations: usize) -> Result<WaveletBank, ScatteringError> {
    if scales == 0 || orientations == 0 {
        return Err(ScatteringError::EmptyBank);
    }
    let available = shape.0.min(shape.1);
    let needed = 1usize.checked_shl(scales as u32 - 1).unwrap_or(usize::MAX);
    if needed > available {
        return Err(ScatteringError::ScaleOverflow { j: scales, needed, available });
    }
    let mut filters = Vec::with_capacity(scales * orientations);
    for j in 0..scales {
        for l in 0..orientations {
            filters.push(morlet(shape, j, l as f64 * PI / orientations as f64));
        }
    }
    Ok(WaveletBank { shape, scales, orientations, filters, family: FILTER_FAMILY, fft: Fft2::new(shape) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak(f: &Array2<Complex64>) -> f64 {
        f.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_filter_is_admissible() {
        let bank = build_bank((64, 64), 1, 1).unwrap();
        assert_eq!(bank.len(), 1);
        let f = bank.filter(0, 0).unwrap();
        assert!(f[(0, 0)].norm() / peak(f) < 1e-6);
    }

    #[test]
    fn every_filter_vanishes_at_zero_frequency() {
        let bank = build_bank((48, 40), 5, 4).unwrap();
        for f in &bank.filters {
            assert!(f[(0, 0)].norm() / peak(f) < 1e-6);
        }
    }

    #[test]
    fn quarter_turn_of_orientation_index_rotates_response() {
        // Orientations span [0, π): shifting ℓ by L/2 rotates by π/2, which
        // maps (kx, ky) -> (ky, -kx) on a square grid.
        let n = 32;
        let l = 4;
        let bank = build_bank((n, n), 3, l).unwrap();
        for j in 0..3 {
            for o in 0..l / 2 {
                let a = bank.filter(j, o).unwrap();
                let b = bank.filter(j, o + l / 2).unwrap();
                for r in 0..n {
                    for c in 0..n {
                        let src = a[((n - c) % n, r)];
                        assert!((b[(r, c)] - src).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn half_turn_is_point_reflection() {
        let n = 16;
        let f0 = morlet((n, n), 1, 0.3);
        let f1 = morlet((n, n), 1, 0.3 + PI);
        for r in 0..n {
            for c in 0..n {
                assert!((f1[(r, c)] - f0[((n - r) % n, (n - c) % n)]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn scale_limit() {
        assert!(build_bank((1424, 176), 6, 4).is_ok());
        assert!(matches!(build_bank((16, 16), 6, 4), Err(ScatteringError::ScaleOverflow { .. })));
        assert!(build_bank((16, 16), 5, 4).is_ok());
        assert_eq!(build_bank((16, 16), 0, 4).unwrap_err(), ScatteringError::EmptyBank);
    }

    #[test]
    fn peaks_move_to_lower_frequency_with_scale() {
        let bank = build_bank((64, 64), 4, 1).unwrap();
        let kx = angular_frequencies(64);
        let mut last = f64::INFINITY;
        for j in 0..4 {
            let f = bank.filter(j, 0).unwrap();
            let (idx, _) = f
                .indexed_iter()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap();
            let k = kx[idx.1].abs();
            assert!(k < last);
            last = k;
        }
    }
}
