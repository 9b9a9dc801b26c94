//! Two-layer Fourier neural operator used as the learned tendency.
//!
//! ```text
//! x (4 ch) --lift--> h0 --[spectral_1 + linear_1, GELU]--> h1
//!          --[spectral_2 + linear_2]--> h2 --project--> tendency (4 ch)
//! ```
//!
//! Spectral multipliers are indexed by signed 2-D frequency
//! `(fy, fx) in [-kmax, kmax]^2`, so the same weights apply on any grid with
//! `min(nlat, nlon) >= 2 * kmax`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ForecastError, Result};
use crate::fft::{signed_freq, Fft2};
use crate::gridio::{GeoGrid, NCHAN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Gelu,
    /// Bypass the nonlinearity; the whole operator becomes affine.
    Identity,
}

/// Named parameter tensors, all stored as flat `f64` buffers. Complex
/// tensors interleave `(re, im)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[width][4]`
    pub lift_w: Vec<f64>,
    pub lift_b: Vec<f64>,
    /// `[mode][out][in]` complex
    pub spec1: Vec<f64>,
    /// `[out][in]`
    pub lin1_w: Vec<f64>,
    pub lin1_b: Vec<f64>,
    pub spec2: Vec<f64>,
    pub lin2_w: Vec<f64>,
    pub lin2_b: Vec<f64>,
    /// `[4][width]`
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
}

/// Parameter group names in file and iteration order.
pub const GROUP_NAMES: [&str; 10] = [
    "lift_w", "lift_b", "spec1", "lin1_w", "lin1_b", "spec2", "lin2_w", "lin2_b", "proj_w", "proj_b",
];

/// Whether group `i` of [`GROUP_NAMES`] is complex-valued.
pub fn group_is_complex(i: usize) -> bool {
    matches!(i, 2 | 5)
}

impl Params {
    pub fn zeros(kmax: usize, width: usize) -> Self {
        let nm = n_modes(kmax);
        Self {
            lift_w: vec![0.0; width * NCHAN],
            lift_b: vec![0.0; width],
            spec1: vec![0.0; 2 * nm * width * width],
            lin1_w: vec![0.0; width * width],
            lin1_b: vec![0.0; width],
            spec2: vec![0.0; 2 * nm * width * width],
            lin2_w: vec![0.0; width * width],
            lin2_b: vec![0.0; width],
            proj_w: vec![0.0; NCHAN * width],
            proj_b: vec![0.0; NCHAN],
        }
    }

    pub fn groups(&self) -> [&Vec<f64>; 10] {
        [
            &self.lift_w,
            &self.lift_b,
            &self.spec1,
            &self.lin1_w,
            &self.lin1_b,
            &self.spec2,
            &self.lin2_w,
            &self.lin2_b,
            &self.proj_w,
            &self.proj_b,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.lift_w,
            &mut self.lift_b,
            &mut self.spec1,
            &mut self.lin1_w,
            &mut self.lin1_b,
            &mut self.spec2,
            &mut self.lin2_w,
            &mut self.lin2_b,
            &mut self.proj_w,
            &mut self.proj_b,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, group by group.
    pub fn add_scaled(&mut self, alpha: f64, other: &Params) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for g in self.groups_mut() {
            g.iter_mut().for_each(|v| *v *= alpha);
        }
    }
}

/// Number of stored spectral modes for a given `kmax`.
pub fn n_modes(kmax: usize) -> usize {
    (2 * kmax + 1).pow(2)
}

/// Learned parameters of the tendency operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateWeights {
    pub kmax: usize,
    pub width: usize,
    pub activation: Activation,
    pub params: Params,
}

impl SurrogateWeights {
    pub fn zeros(kmax: usize, width: usize) -> Self {
        Self {
            kmax,
            width,
            activation: Activation::Gelu,
            params: Params::zeros(kmax, width),
        }
    }

    /// Seeded random initialisation. `channel_scale[i]` is a typical
    /// magnitude of input channel `i`, used to condition the lift.
    pub fn init(kmax: usize, width: usize, channel_scale: [f64; NCHAN], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(kmax, width);
        let wf = width as f64;
        let mut uni = |scale: f64| rng.random_range(-1.0..1.0) * scale;
        let p = &mut w.params;
        for c in 0..width {
            for i in 0..NCHAN {
                p.lift_w[c * NCHAN + i] = uni(1.0 / (2.0 * channel_scale[i].max(1e-6)));
            }
        }
        let spec_scale = 1.0 / wf;
        for v in p.spec1.iter_mut().chain(p.spec2.iter_mut()) {
            *v = uni(spec_scale);
        }
        let lin_scale = 1.0 / wf.sqrt();
        for v in p.lin1_w.iter_mut().chain(p.lin2_w.iter_mut()) {
            *v = uni(lin_scale);
        }
        let proj_scale = 0.01 / wf.sqrt();
        for v in p.proj_w.iter_mut() {
            *v = uni(proj_scale);
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.kmax == 0 || self.width == 0 {
            return Err(ForecastError::InvalidWeights("kmax and width must be >= 1".into()));
        }
        let expect = Params::zeros(self.kmax, self.width);
        for ((name, a), b) in GROUP_NAMES.iter().zip(self.params.groups()).zip(expect.groups()) {
            if a.len() != b.len() {
                return Err(ForecastError::InvalidWeights(format!(
                    "group {name} has {} values, expected {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        if !self.params.all_finite() {
            return Err(ForecastError::InvalidWeights("non-finite weight".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn mode_index(&self, fy: i64, fx: i64) -> usize {
        let side = 2 * self.kmax as i64 + 1;
        let k = self.kmax as i64;
        ((fy + k) * side + (fx + k)) as usize
    }
}

const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

#[inline]
fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_A * (u + GELU_C * u * u * u)).tanh())
}

#[inline]
fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_A * (u + GELU_C * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_A * (1.0 + 3.0 * GELU_C * u * u)
}

/// Weights bound to one grid: FFT plans, retained-mode table and mask.
pub struct Surrogate<'w> {
    pub weights: &'w SurrogateWeights,
    fft: Fft2,
    /// `(bin index in the plane, stored mode index)` for every retained mode.
    retained: Vec<(usize, usize)>,
    mask: Vec<bool>,
}

/// Intermediate activations kept for the backward pass.
pub struct Tape {
    x: Vec<f64>,
    h0: Vec<f64>,
    hat0: Vec<Complex64>,
    u1: Vec<f64>,
    h1: Vec<f64>,
    hat1: Vec<Complex64>,
    h2: Vec<f64>,
}

impl<'w> Surrogate<'w> {
    pub fn new(weights: &'w SurrogateWeights, grid: &GeoGrid) -> Result<Self> {
        weights.validate()?;
        let (nlat, nlon) = (grid.nlat, grid.nlon);
        if nlat.min(nlon) < 2 * weights.kmax {
            return Err(ForecastError::GridTooSmall {
                kmax: weights.kmax,
                nlat,
                nlon,
            });
        }
        let k = weights.kmax as i64;
        let mut retained = Vec::new();
        for r in 0..nlat {
            let fy = signed_freq(r, nlat);
            if fy.abs() > k {
                continue;
            }
            for c in 0..nlon {
                let fx = signed_freq(c, nlon);
                if fx.abs() > k {
                    continue;
                }
                retained.push((r * nlon + c, weights.mode_index(fy, fx)));
            }
        }
        Ok(Self {
            weights,
            fft: Fft2::new(nlat, nlon),
            retained,
            mask: grid.mask.clone(),
        })
    }

    pub fn ncells(&self) -> usize {
        self.fft.len()
    }

    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    /// Evaluate the tendency of a `[4][nlat][nlon]` state.
    pub fn tendency(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Forward pass returning the tendency and the tape for [`Self::backward`].
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        let n = self.ncells();
        let w = self.weights.width;
        let p = &self.weights.params;
        assert_eq!(x.len(), NCHAN * n, "state size does not match grid");

        let mut h0 = vec![0.0; w * n];
        for c in 0..w {
            let out = &mut h0[c * n..(c + 1) * n];
            out.fill(p.lift_b[c]);
            for i in 0..NCHAN {
                let a = p.lift_w[c * NCHAN + i];
                if a != 0.0 {
                    for (o, &xi) in out.iter_mut().zip(&x[i * n..(i + 1) * n]) {
                        *o += a * xi;
                    }
                }
            }
        }

        let (mut u1, hat0) = self.layer_forward(&h0, &p.spec1, &p.lin1_w, &p.lin1_b);
        let h1: Vec<f64> = match self.weights.activation {
            Activation::Gelu => u1.iter().map(|&u| gelu(u)).collect(),
            Activation::Identity => u1.clone(),
        };
        if self.weights.activation == Activation::Identity {
            // the tape only needs u1 for the activation gradient
            u1.clear();
        }
        let (h2, hat1) = self.layer_forward(&h1, &p.spec2, &p.lin2_w, &p.lin2_b);

        let mut out = vec![0.0; NCHAN * n];
        for j in 0..NCHAN {
            let o = &mut out[j * n..(j + 1) * n];
            o.fill(p.proj_b[j]);
            for c in 0..w {
                let a = p.proj_w[j * w + c];
                if a != 0.0 {
                    for (ov, &hv) in o.iter_mut().zip(&h2[c * n..(c + 1) * n]) {
                        *ov += a * hv;
                    }
                }
            }
            for (ov, &m) in o.iter_mut().zip(&self.mask) {
                if !m {
                    *ov = 0.0;
                }
            }
        }
        let tape = Tape {
            x: x.to_vec(),
            h0,
            hat0,
            u1,
            h1,
            hat1,
            h2,
        };
        (out, tape)
    }

    /// One spectral layer without activation: returns the pre-activation
    /// and the retained input coefficients `[r][c]`.
    fn layer_forward(&self, h: &[f64], spec: &[f64], lin_w: &[f64], lin_b: &[f64]) -> (Vec<f64>, Vec<Complex64>) {
        let n = self.ncells();
        let w = self.weights.width;
        let nr = self.retained.len();
        let mut hat = vec![Complex64::new(0.0, 0.0); nr * w];
        for c in 0..w {
            let coeffs = self.fft.forward_real(&h[c * n..(c + 1) * n]);
            for (r, &(bin, _)) in self.retained.iter().enumerate() {
                hat[r * w + c] = coeffs[bin];
            }
        }
        let mut u = vec![0.0; w * n];
        let mut plane = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..w {
            plane.fill(Complex64::new(0.0, 0.0));
            for (r, &(bin, mode)) in self.retained.iter().enumerate() {
                let base = 2 * (mode * w + o) * w;
                let row = &spec[base..base + 2 * w];
                let hr = &hat[r * w..(r + 1) * w];
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..w {
                    acc += Complex64::new(row[2 * c], row[2 * c + 1]) * hr[c];
                }
                plane[bin] = acc;
            }
            self.fft.inverse(&mut plane);
            let uo = &mut u[o * n..(o + 1) * n];
            for (v, z) in uo.iter_mut().zip(&plane) {
                *v = z.re + lin_b[o];
            }
            for c in 0..w {
                let a = lin_w[o * w + c];
                if a != 0.0 {
                    for (v, &hv) in uo.iter_mut().zip(&h[c * n..(c + 1) * n]) {
                        *v += a * hv;
                    }
                }
            }
        }
        (u, hat)
    }

    /// Backpropagate `g_out` (gradient w.r.t. the tendency). Parameter
    /// gradients are accumulated into `grad`; the input gradient is returned.
    pub fn backward(&self, tape: &Tape, g_out: &[f64], grad: &mut Params) -> Vec<f64> {
        let n = self.ncells();
        let w = self.weights.width;
        let p = &self.weights.params;

        let mut g = g_out.to_vec();
        for j in 0..NCHAN {
            for (v, &m) in g[j * n..(j + 1) * n].iter_mut().zip(&self.mask) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        let mut g_h2 = vec![0.0; w * n];
        for j in 0..NCHAN {
            let gj = &g[j * n..(j + 1) * n];
            grad.proj_b[j] += gj.iter().sum::<f64>();
            for c in 0..w {
                let h2c = &tape.h2[c * n..(c + 1) * n];
                grad.proj_w[j * w + c] += dot(gj, h2c);
                let a = p.proj_w[j * w + c];
                for (gv, &gjv) in g_h2[c * n..(c + 1) * n].iter_mut().zip(gj) {
                    *gv += a * gjv;
                }
            }
        }

        let g_h1 = self.layer_backward(
            &tape.h1,
            &tape.hat1,
            &g_h2,
            &p.spec2,
            &p.lin2_w,
            &mut grad.spec2,
            &mut grad.lin2_w,
            &mut grad.lin2_b,
        );
        let g_u1: Vec<f64> = match self.weights.activation {
            Activation::Gelu => g_h1.iter().zip(&tape.u1).map(|(&gv, &u)| gv * gelu_grad(u)).collect(),
            Activation::Identity => g_h1,
        };
        let g_h0 = self.layer_backward(
            &tape.h0,
            &tape.hat0,
            &g_u1,
            &p.spec1,
            &p.lin1_w,
            &mut grad.spec1,
            &mut grad.lin1_w,
            &mut grad.lin1_b,
        );

        let mut g_x = vec![0.0; NCHAN * n];
        for c in 0..w {
            let gc = &g_h0[c * n..(c + 1) * n];
            grad.lift_b[c] += gc.iter().sum::<f64>();
            for i in 0..NCHAN {
                grad.lift_w[c * NCHAN + i] += dot(gc, &tape.x[i * n..(i + 1) * n]);
                let a = p.lift_w[c * NCHAN + i];
                for (gx, &gv) in g_x[i * n..(i + 1) * n].iter_mut().zip(gc) {
                    *gx += a * gv;
                }
            }
        }
        g_x
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        h: &[f64],
        hat: &[Complex64],
        g_u: &[f64],
        spec: &[f64],
        lin_w: &[f64],
        g_spec: &mut [f64],
        g_lin_w: &mut [f64],
        g_lin_b: &mut [f64],
    ) -> Vec<f64> {
        let n = self.ncells();
        let w = self.weights.width;
        let nr = self.retained.len();
        let inv_n = 1.0 / n as f64;

        let mut g_h = vec![0.0; w * n];
        // pointwise path
        for o in 0..w {
            let go = &g_u[o * n..(o + 1) * n];
            g_lin_b[o] += go.iter().sum::<f64>();
            for c in 0..w {
                g_lin_w[o * w + c] += dot(go, &h[c * n..(c + 1) * n]);
                let a = lin_w[o * w + c];
                if a != 0.0 {
                    for (gh, &gv) in g_h[c * n..(c + 1) * n].iter_mut().zip(go) {
                        *gh += a * gv;
                    }
                }
            }
        }

        // spectral path: gamma_o = FFT(g_u_o) / N on retained modes
        let mut gamma = vec![Complex64::new(0.0, 0.0); nr * w];
        for o in 0..w {
            let coeffs = self.fft.forward_real(&g_u[o * n..(o + 1) * n]);
            for (r, &(bin, _)) in self.retained.iter().enumerate() {
                gamma[r * w + o] = coeffs[bin] * inv_n;
            }
        }
        let mut eta = vec![Complex64::new(0.0, 0.0); nr * w];
        for (r, &(_, mode)) in self.retained.iter().enumerate() {
            let gr = &gamma[r * w..(r + 1) * w];
            let hr = &hat[r * w..(r + 1) * w];
            for o in 0..w {
                let base = 2 * (mode * w + o) * w;
                let go = gr[o];
                for c in 0..w {
                    let gw = go * hr[c].conj();
                    g_spec[base + 2 * c] += gw.re;
                    g_spec[base + 2 * c + 1] += gw.im;
                    let rw = Complex64::new(spec[base + 2 * c], spec[base + 2 * c + 1]);
                    eta[r * w + c] += rw.conj() * go;
                }
            }
        }
        let mut plane = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..w {
            plane.fill(Complex64::new(0.0, 0.0));
            for (r, &(bin, _)) in self.retained.iter().enumerate() {
                plane[bin] = eta[r * w + c];
            }
            self.fft.inverse_unscaled(&mut plane);
            for (gh, z) in g_h[c * n..(c + 1) * n].iter_mut().zip(&plane) {
                *gh += z.re;
            }
        }
        g_h
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
