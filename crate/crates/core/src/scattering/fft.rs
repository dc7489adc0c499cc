use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward and inverse 2D FFTs for one shape. The inverse is
/// normalized by `1 / (H W)`.
#[derive(Clone)]
pub struct Fft2 {
    shape: (usize, usize),
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("shape", &self.shape).finish()
    }
}

impl Fft2 {
    pub fn new(shape: (usize, usize)) -> Self {
        let mut planner = FftPlanner::new();
        let (h, w) = shape;
        Self {
            shape,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn run(&self, data: &mut Array2<Complex64>, rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = self.shape;
        let buf = data.as_slice_mut().expect("standard layout");
        rows.process(buf);
        let mut column = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = buf[r * w + c];
            }
            cols.process(&mut column);
            for r in 0..h {
                buf[r * w + c] = column[r];
            }
        }
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.row_inv, &self.col_inv);
        let norm = 1.0 / (self.shape.0 * self.shape.1) as f64;
        data.mapv_inplace(|v| v * norm);
    }
}

/// Angular frequencies `2π · fftfreq(n)` in FFT index order.
pub(crate) fn angular_frequencies(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * k / n as f64
        })
        .collect()
}
