use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ForecastError, Result};
use crate::fft::{signed_freq, Fft2};
use crate::gridio::{GeoGrid, WaveFrame, NCHAN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ocean_l2: f64,
    pub spectral: f64,
    pub total: f64,
    pub lambda_spec: f64,
}

/// Two-term loss bound to one grid.
///
/// `ocean_l2` is the mean squared error over ocean cells and channels.
/// `spectral` sums `|F(pred) - F(truth)|^2` over retained modes and channels
/// and divides by `4 N^2` (N = cells per plane), which makes it equal to the
/// plain mean squared error when every mode is retained (Parseval).
pub struct LossEvaluator {
    fft: Fft2,
    mask: Vec<bool>,
    n_ocean: usize,
    /// Per-bin retention flag.
    retained: Vec<bool>,
    pub lambda_spec: f64,
}

impl LossEvaluator {
    /// `spectral_kmax = None` retains every mode.
    pub fn new(grid: &GeoGrid, lambda_spec: f64, spectral_kmax: Option<usize>) -> Result<Self> {
        let n_ocean = grid.n_ocean();
        if n_ocean == 0 {
            return Err(ForecastError::NoOceanCells);
        }
        if !(lambda_spec >= 0.0 && lambda_spec.is_finite()) {
            return Err(ForecastError::InvalidConfig("lambda_spec must be finite and >= 0".into()));
        }
        let (nlat, nlon) = (grid.nlat, grid.nlon);
        let mut retained = vec![true; nlat * nlon];
        if let Some(k) = spectral_kmax {
            let k = k as i64;
            for r in 0..nlat {
                for c in 0..nlon {
                    retained[r * nlon + c] = signed_freq(r, nlat).abs() <= k && signed_freq(c, nlon).abs() <= k;
                }
            }
        }
        Ok(Self {
            fft: Fft2::new(nlat, nlon),
            mask: grid.mask.clone(),
            n_ocean,
            retained,
            lambda_spec,
        })
    }

    fn ncells(&self) -> usize {
        self.mask.len()
    }

    fn check(&self, pred: &[f64], truth: &[f64]) -> Result<()> {
        let want = NCHAN * self.ncells();
        if pred.len() != want || truth.len() != want {
            return Err(ForecastError::ShapeMismatch(format!(
                "expected {want} values, got pred {} truth {}",
                pred.len(),
                truth.len()
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, pred: &[f64], truth: &[f64]) -> Result<LossReport> {
        self.check(pred, truth)?;
        Ok(self.compute(pred, truth, None))
    }

    /// Loss and its gradient with respect to `pred`.
    pub fn evaluate_with_grad(&self, pred: &[f64], truth: &[f64]) -> Result<(LossReport, Vec<f64>)> {
        self.check(pred, truth)?;
        let mut grad = vec![0.0; pred.len()];
        let report = self.compute(pred, truth, Some(&mut grad));
        Ok((report, grad))
    }

    fn compute(&self, pred: &[f64], truth: &[f64], mut grad: Option<&mut Vec<f64>>) -> LossReport {
        let n = self.ncells();
        let l2_den = (NCHAN * self.n_ocean) as f64;
        let spec_den = NCHAN as f64 * (n as f64) * (n as f64);
        let mut l2 = 0.0;
        let mut spec = 0.0;
        let mut plane = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..NCHAN {
            let (p, t) = (&pred[c * n..(c + 1) * n], &truth[c * n..(c + 1) * n]);
            for cell in 0..n {
                let e = p[cell] - t[cell];
                plane[cell] = Complex64::new(e, 0.0);
                if self.mask[cell] {
                    l2 += e * e;
                    if let Some(g) = grad.as_deref_mut() {
                        g[c * n + cell] += 2.0 * e / l2_den;
                    }
                }
            }
            self.fft.forward(&mut plane);
            for (z, &keep) in plane.iter_mut().zip(&self.retained) {
                if keep {
                    spec += z.norm_sqr();
                } else {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                if self.lambda_spec != 0.0 {
                    self.fft.inverse_unscaled(&mut plane);
                    let s = self.lambda_spec * 2.0 / spec_den;
                    for (gv, z) in g[c * n..(c + 1) * n].iter_mut().zip(&plane) {
                        *gv += s * z.re;
                    }
                }
            }
        }
        let ocean_l2 = l2 / l2_den;
        let spectral = spec / spec_den;
        LossReport {
            ocean_l2,
            spectral,
            total: ocean_l2 + self.lambda_spec * spectral,
            lambda_spec: self.lambda_spec,
        }
    }
}

/// Loss between two frames with every Fourier mode retained.
pub fn loss(pred: &WaveFrame, truth: &WaveFrame, grid: &GeoGrid, lambda_spec: f64) -> Result<LossReport> {
    LossEvaluator::new(grid, lambda_spec, None)?.evaluate(&pred.data, &truth.data)
}
