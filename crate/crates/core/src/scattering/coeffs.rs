use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use super::bank::WaveletBank;
use super::ScatteringError;
use crate::d4::Map2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct S3Entry {
    pub j1: usize,
    pub l1: usize,
    pub j2: usize,
    pub l2: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct S4Entry {
    pub j1: usize,
    pub l1: usize,
    pub j2: usize,
    pub l2: usize,
    pub j3: usize,
    pub l3: usize,
    pub re: f64,
    pub im: f64,
}

/// Raw scattering-covariance coefficients of one field.
///
/// `s1` and `s2` are indexed by `j * L + ℓ`. `s3` lists pairs with
/// `j1 < j2`, `s4` triples with `j1 < j2 <= j3`, both in nested loop order
/// over `(j1, ℓ1, j2, ℓ2[, j3, ℓ3])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringVector {
    pub scales: usize,
    pub orientations: usize,
    pub family: &'static str,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: Vec<S3Entry>,
    pub s4: Vec<S4Entry>,
}

impl ScatteringVector {
    /// `s1, s2`, then `(re, im)` of every `s3` and `s4` entry.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.s1.len() * 2 + 2 * (self.s3.len() + self.s4.len()));
        out.extend_from_slice(&self.s1);
        out.extend_from_slice(&self.s2);
        for e in &self.s3 {
            out.push(e.re);
            out.push(e.im);
        }
        for e in &self.s4 {
            out.push(e.re);
            out.push(e.im);
        }
        out
    }

    /// Column names matching [`flatten`](Self::flatten).
    pub fn flat_names(&self) -> Vec<String> {
        let l = self.orientations;
        let mut names = Vec::new();
        for prefix in ["s1", "s2"] {
            for k in 0..self.s1.len() {
                names.push(format!("{prefix}_j{}_l{}", k / l, k % l));
            }
        }
        for e in &self.s3 {
            for part in ["re", "im"] {
                names.push(format!("s3_j{}_l{}_j{}_l{}_{part}", e.j1, e.l1, e.j2, e.l2));
            }
        }
        for e in &self.s4 {
            for part in ["re", "im"] {
                names.push(format!("s4_j{}_l{}_j{}_l{}_j{}_l{}_{part}", e.j1, e.l1, e.j2, e.l2, e.j3, e.l3));
            }
        }
        names
    }
}

fn check_shape(field: &Map2D, bank: &WaveletBank) -> Result<(), ScatteringError> {
    if field.shape() != bank.shape {
        return Err(ScatteringError::ShapeMismatch { field: field.shape(), bank: bank.shape });
    }
    Ok(())
}

fn zero_filled(field: &Map2D) -> Array2<Complex64> {
    Array2::from_shape_fn(field.shape(), |(i, j)| {
        if field.is_valid(i, j) {
            Complex64::new(field.data[(i, j)], 0.0)
        } else {
            Complex64::default()
        }
    })
}

fn convolve_spectrum(spectrum: &Array2<Complex64>, filter: &Array2<Complex64>, bank: &WaveletBank) -> Array2<Complex64> {
    let mut out = spectrum * filter;
    bank.fft.inverse(&mut out);
    out
}

/// Circular convolution `I ⋆ ψ^(j, ℓ)` computed as `IFFT(FFT(I) · ψ̂)`.
/// Masked pixels are zero-filled first.
pub fn wavelet_convolve(field: &Map2D, bank: &WaveletBank, j: usize, l: usize) -> Result<Array2<Complex64>, ScatteringError> {
    check_shape(field, bank)?;
    let filter = bank.filter(j, l)?;
    let mut spectrum = zero_filled(field);
    bank.fft.forward(&mut spectrum);
    Ok(convolve_spectrum(&spectrum, filter, bank))
}

/// Spatial averages over the valid pixels.
struct ValidMean {
    valid: Vec<usize>,
}

impl ValidMean {
    fn new(field: &Map2D) -> Result<Self, ScatteringError> {
        let (_, w) = field.shape();
        let valid: Vec<usize> = (0..field.data.len()).filter(|&k| field.is_valid(k / w, k % w)).collect();
        if valid.is_empty() {
            return Err(ScatteringError::NoValidPixels);
        }
        Ok(Self { valid })
    }

    fn real(&self, a: &Array2<Complex64>, f: impl Fn(Complex64) -> f64) -> f64 {
        let s = a.as_slice().expect("standard layout");
        let vals: Vec<f64> = self.valid.iter().map(|&k| f(s[k])).collect();
        crate::numeric::mean(&vals)
    }

    fn complex(&self, a: &Array2<Complex64>) -> Complex64 {
        Complex64::new(self.real(a, |v| v.re), self.real(a, |v| v.im))
    }

    /// `⟨X Y*⟩ - ⟨X⟩⟨Y*⟩`.
    fn cov(&self, x: &Array2<Complex64>, y: &Array2<Complex64>) -> Complex64 {
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice().expect("standard layout");
        let prod: Vec<Complex64> = self.valid.iter().map(|&k| xs[k] * ys[k].conj()).collect();
        let re: Vec<f64> = prod.iter().map(|v| v.re).collect();
        let im: Vec<f64> = prod.iter().map(|v| v.im).collect();
        let cross = Complex64::new(crate::numeric::mean(&re), crate::numeric::mean(&im));
        cross - self.complex(x) * self.complex(y).conj()
    }
}

/// All four coefficient families for one field.
pub fn scattering_cov(field: &Map2D, bank: &WaveletBank) -> Result<ScatteringVector, ScatteringError> {
    check_shape(field, bank)?;
    let avg = ValidMean::new(field)?;
    let (nj, nl) = (bank.scales, bank.orientations);

    let mut spectrum = zero_filled(field);
    bank.fft.forward(&mut spectrum);
    let first: Vec<Array2<Complex64>> =
        bank.filters.par_iter().map(|f| convolve_spectrum(&spectrum, f, bank)).collect();
    // Spectra of the moduli |I ⋆ ψ^λ|, with masked pixels zero-filled again.
    let modulus_spectra: Vec<Array2<Complex64>> = first
        .par_iter()
        .map(|w1| {
            let mut m = Array2::from_shape_fn(w1.dim(), |(i, j)| {
                if field.is_valid(i, j) { Complex64::new(w1[(i, j)].norm(), 0.0) } else { Complex64::default() }
            });
            bank.fft.forward(&mut m);
            m
        })
        .collect();

    let s1 = first.iter().map(|w| avg.real(w, |v| v.norm())).collect();
    let s2 = first.iter().map(|w| avg.real(w, |v| v.norm_sqr())).collect();

    let lam = |j: usize, l: usize| j * nl + l;
    let mut s3 = Vec::new();
    let mut s4 = Vec::new();
    for j1 in 0..nj {
        for l1 in 0..nl {
            let filter1 = &bank.filters[lam(j1, l1)];
            // Second-layer fields |I ⋆ ψ^λ2| ⋆ ψ^λ1 for every j2 > j1.
            let second: Vec<((usize, usize), Array2<Complex64>)> = ((j1 + 1)..nj)
                .flat_map(|j2| (0..nl).map(move |l2| (j2, l2)))
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|(j2, l2)| ((j2, l2), convolve_spectrum(&modulus_spectra[lam(j2, l2)], filter1, bank)))
                .collect();
            let x = &first[lam(j1, l1)];
            for ((j2, l2), y) in &second {
                let c = avg.cov(x, y);
                s3.push(S3Entry { j1, l1, j2: *j2, l2: *l2, re: c.re, im: c.im });
            }
            for ((j2, l2), y2) in &second {
                for ((j3, l3), y3) in &second {
                    if j3 < j2 {
                        continue;
                    }
                    let c = avg.cov(y3, y2);
                    s4.push(S4Entry { j1, l1, j2: *j2, l2: *l2, j3: *j3, l3: *l3, re: c.re, im: c.im });
                }
            }
        }
    }
    Ok(ScatteringVector { scales: nj, orientations: nl, family: bank.family, s1, s2, s3, s4 })
}

/// Length of [`isotropic_reduce`]'s output.
pub fn isotropic_dimension(scales: usize, orientations: usize, keep_imaginary: bool) -> usize {
    let pairs = scales * scales.saturating_sub(1) / 2;
    let triples: usize = (0..scales).map(|j1| {
        let m = scales - j1 - 1;
        m * (m + 1) / 2
    }).sum();
    let parts = if keep_imaginary { 2 } else { 1 };
    2 * scales + parts * (pairs * orientations + triples * orientations * orientations)
}

/// Average over a global rotation of all orientation indices.
///
/// S1 and S2 are averaged over `ℓ` at each scale. S3 keeps the relative
/// orientation `ℓ2 - ℓ1 (mod L)` and S4 the pair `(ℓ2 - ℓ1, ℓ3 - ℓ1)`,
/// averaging over `ℓ1`. Only real parts are kept unless `keep_imaginary`.
pub fn isotropic_reduce(sv: &ScatteringVector, keep_imaginary: bool) -> Vec<f64> {
    let (nj, nl) = (sv.scales, sv.orientations);
    let per_scale = |v: &[f64]| -> Vec<f64> {
        (0..nj)
            .map(|j| {
                let mut block = v[j * nl..(j + 1) * nl].to_vec();
                block.sort_by(f64::total_cmp);
                crate::numeric::mean(&block)
            })
            .collect()
    };
    let mut out = per_scale(&sv.s1);
    out.extend(per_scale(&sv.s2));

    let rel = |a: usize, b: usize| (b + nl - a) % nl;
    let mut s3: std::collections::BTreeMap<(usize, usize, usize), Vec<(f64, f64)>> = Default::default();
    for e in &sv.s3 {
        s3.entry((e.j1, e.j2, rel(e.l1, e.l2))).or_default().push((e.re, e.im));
    }
    let mut s4: std::collections::BTreeMap<(usize, usize, usize, usize, usize), Vec<(f64, f64)>> = Default::default();
    for e in &sv.s4 {
        s4.entry((e.j1, e.j2, e.j3, rel(e.l1, e.l2), rel(e.l1, e.l3))).or_default().push((e.re, e.im));
    }
    let mut push = |vals: &[(f64, f64)]| {
        let mut re: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let mut im: Vec<f64> = vals.iter().map(|v| v.1).collect();
        // Sorted so a cyclic relabeling of orientations sums in the same order.
        re.sort_by(f64::total_cmp);
        im.sort_by(f64::total_cmp);
        out.push(crate::numeric::mean(&re));
        if keep_imaginary {
            out.push(crate::numeric::mean(&im));
        }
    };
    s3.values().for_each(|v| push(v));
    s4.values().for_each(|v| push(v));
    out
}
