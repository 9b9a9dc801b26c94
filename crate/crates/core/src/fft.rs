//! Unnormalised 2-D discrete Fourier transforms over row-major planes.
//!
//! Forward: `X[k] = sum_n x[n] e^{-2πi k·n/N}`. Inverse carries the `1/N`
//! factor so `inverse(forward(x)) == x`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached row/column plans for one `(rows, cols)` shape.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-place forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.row_fwd, &self.col_fwd);
    }

    /// In-place inverse transform, including the `1/N` normalisation.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_unscaled(data);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place inverse transform without the `1/N` factor (the adjoint of
    /// [`Fft2::forward`]).
    pub fn inverse_unscaled(&self, data: &mut [Complex64]) {
        self.apply(data, &self.row_inv, &self.col_inv);
    }

    /// Forward transform of a real plane.
    pub fn forward_real(&self, plane: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn apply(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "plane size does not match plan");
        for r in data.chunks_exact_mut(self.cols) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
    }
}

/// Signed frequency of DFT bin `index` on an axis of length `n`, in
/// `(-n/2, n/2]`.
pub fn signed_freq(index: usize, n: usize) -> i64 {
    let i = index as i64;
    let n = n as i64;
    if 2 * i <= n {
        i
    } else {
        i - n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[f64], rows: usize, cols: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
        for ky in 0..rows {
            for kx in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..rows {
                    for xx in 0..cols {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((ky * y) as f64 / rows as f64 + (kx * xx) as f64 / cols as f64);
                        acc += x[y * cols + xx] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[ky * cols + kx] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let (rows, cols) = (5, 6);
        let x: Vec<f64> = (0..rows * cols).map(|i| ((i * 37) % 11) as f64 - 4.0).collect();
        let fft = Fft2::new(rows, cols);
        let got = fft.forward_real(&x);
        let want = naive_dft(&x, rows, cols);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-9);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let fft = Fft2::new(8, 4);
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut buf = fft.forward_real(&x);
        fft.inverse(&mut buf);
        for (b, v) in buf.iter().zip(&x) {
            assert!((b.re - v).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn signed_frequencies() {
        let f: Vec<i64> = (0..6).map(|i| signed_freq(i, 6)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, -2, -1]);
        let f: Vec<i64> = (0..5).map(|i| signed_freq(i, 5)).collect();
        assert_eq!(f, vec![0, 1, 2, -2, -1]);
    }
}
