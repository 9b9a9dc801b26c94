//! Learned tendency, predictor-corrector stepping and autoregressive rollout.

mod loss;
mod network;
mod train;
mod weights_io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assimilate::{self, AssimConfig, AssimError, Observation};
use crate::gridio::{project_physical, FieldStack, GeoGrid, WaveFrame};

pub use loss::{loss, LossEvaluator, LossReport};
pub use network::{
    group_is_complex, n_modes, Activation, Params, Surrogate, SurrogateWeights, Tape, GROUP_NAMES,
};
pub use train::{train, Optimizer, TrainConfig, TrainOutcome, Trainer};
pub use weights_io::{decode_weights, encode_weights, read_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("grid too small for kmax {kmax}: {nlat}x{nlon} needs min dimension >= {}", 2 * kmax)]
    GridTooSmall { kmax: usize, nlat: usize, nlon: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("numerical blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },
    #[error("invalid rollout config: {0}")]
    InvalidConfig(String),
    #[error("no ocean cells")]
    NoOceanCells,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged {
        epoch: usize,
        detail: String,
        last_finite: Box<SurrogateWeights>,
    },
    #[error("assimilation at step {step}: {source}")]
    Assimilation {
        step: usize,
        #[source]
        source: AssimError,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad weights file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ForecastError>;

/// How the corrector's inner argument is formed.
///
/// The default uses `x + N'[x]`; with `heun_inner_dt` it becomes the
/// classical Heun predictor `x + dt * N'[x]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PecOptions {
    /// Step length in model steps (1.0 = one `step_seconds` interval).
    pub dt: f64,
    pub heun_inner_dt: bool,
}

impl Default for PecOptions {
    fn default() -> Self {
        Self {
            dt: 1.0,
            heun_inner_dt: false,
        }
    }
}

/// Minimal vector-space interface for the generic integrator.
pub trait State: Clone {
    /// `self + alpha * other`
    fn axpy(&self, alpha: f64, other: &Self) -> Self;
}

impl State for f64 {
    fn axpy(&self, alpha: f64, other: &Self) -> Self {
        self + alpha * other
    }
}

impl State for Vec<f64> {
    fn axpy(&self, alpha: f64, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a + alpha * b).collect()
    }
}

/// `x + 0.5 dt (N[x] + N[x + s N[x]])` with `s = 1`, or `s = dt`
/// when `heun_inner_dt` is set.
pub fn pec_integrate<S: State>(x: &S, opts: PecOptions, mut n: impl FnMut(&S) -> S) -> S {
    let a = n(x);
    let inner = if opts.heun_inner_dt { opts.dt } else { 1.0 };
    let z = x.axpy(inner, &a);
    let b = n(&z);
    x.axpy(0.5 * opts.dt, &a.axpy(1.0, &b))
}

/// One forecast step: predictor-corrector update, then projection onto the
/// physical state (unit directions, non-negative height, land zero).
pub fn pec_step(
    frame: &WaveFrame,
    model: &Surrogate<'_>,
    grid: &GeoGrid,
    step_seconds: u32,
    opts: PecOptions,
) -> Result<WaveFrame> {
    if model.ncells() != grid.ncells() {
        return Err(ForecastError::ShapeMismatch("model and grid disagree".into()));
    }
    step_with(frame, grid, step_seconds, opts, |x| model.tendency(x))
}

fn step_with(
    frame: &WaveFrame,
    grid: &GeoGrid,
    step_seconds: u32,
    opts: PecOptions,
    mut tendency: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<WaveFrame> {
    if !(opts.dt > 0.0) {
        return Err(ForecastError::InvalidConfig("dt must be > 0".into()));
    }
    if frame.ncells() != grid.ncells() {
        return Err(ForecastError::ShapeMismatch("frame and grid disagree".into()));
    }
    let data = pec_integrate(&frame.data, opts, |x| tendency(x));
    if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
        return Err(ForecastError::BlowUp {
            step: 0,
            detail: format!("non-finite value at flat index {bad}"),
        });
    }
    let mut next = WaveFrame {
        timestamp: frame.timestamp + step_seconds as i64,
        data,
    };
    project_physical(&mut next, &grid.mask);
    Ok(next)
}

/// Rollout configuration. Assimilation entries apply after the step with
/// the given index (1-based).
#[derive(Debug, Clone, Default)]
pub struct RolloutConfig {
    pub steps: usize,
    pub pec: PecOptions,
    pub assimilation_schedule: Vec<(usize, Vec<Observation>)>,
    pub assim: AssimConfig,
}

impl RolloutConfig {
    pub fn single_shot(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, _) in &self.assimilation_schedule {
            if *k == 0 || *k > self.steps {
                return Err(ForecastError::InvalidConfig(format!(
                    "assimilation step {k} outside [1, {}]",
                    self.steps
                )));
            }
        }
        self.assim
            .validate()
            .map_err(|e| ForecastError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Autoregressive rollout from `init`; frame 0 of the result is `init`.
pub fn rollout(
    init: &WaveFrame,
    grid: &GeoGrid,
    step_seconds: u32,
    cfg: &RolloutConfig,
    weights: &SurrogateWeights,
) -> Result<FieldStack> {
    let model = Surrogate::new(weights, grid)?;
    rollout_with(init, grid, step_seconds, cfg, |_, x| model.tendency(x))
}

/// Rollout with an arbitrary tendency `f(step, state)`, where `step` is the
/// 1-based index of the step being taken.
pub fn rollout_with(
    init: &WaveFrame,
    grid: &GeoGrid,
    step_seconds: u32,
    cfg: &RolloutConfig,
    mut tendency: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> Result<FieldStack> {
    cfg.validate()?;
    if init.ncells() != grid.ncells() {
        return Err(ForecastError::ShapeMismatch("initial frame does not match grid".into()));
    }
    let mut frames = Vec::with_capacity(cfg.steps + 1);
    frames.push(init.clone());
    for step in 1..=cfg.steps {
        let prev = frames.last().expect("init pushed");
        let mut next = step_with(prev, grid, step_seconds, cfg.pec, |x| tendency(step, x)).map_err(|e| match e {
            ForecastError::BlowUp { detail, .. } => ForecastError::BlowUp { step, detail },
            other => other,
        })?;
        for (_, obs) in cfg.assimilation_schedule.iter().filter(|(k, _)| *k == step) {
            next = assimilate::rbf_assimilate(&next, grid, obs, &cfg.assim)
                .map_err(|source| ForecastError::Assimilation { step, source })?;
        }
        frames.push(next);
    }
    Ok(FieldStack {
        grid: grid.clone(),
        frames,
        step_seconds,
    })
}

/// Baseline that repeats `init` with advancing timestamps.
pub fn persistence_forecast(init: &WaveFrame, grid: &GeoGrid, step_seconds: u32, steps: usize) -> FieldStack {
    let frames = (0..=steps)
        .map(|k| WaveFrame {
            timestamp: init.timestamp + k as i64 * step_seconds as i64,
            data: init.data.clone(),
        })
        .collect();
    FieldStack {
        grid: grid.clone(),
        frames,
        step_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridio::{gen_synthetic, SynthParams};

    #[test]
    fn scalar_harness_follows_printed_formula() {
        let x = pec_integrate(&1.0, PecOptions { dt: 0.1, heun_inner_dt: false }, |x| -x);
        assert!((x - 0.95).abs() < 1e-12);
    }

    #[test]
    fn scalar_harness_heun_inner_dt() {
        let dt = 0.1;
        let x = pec_integrate(&1.0, PecOptions { dt, heun_inner_dt: true }, |x| -x);
        assert!((x - (1.0 - dt + dt * dt / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_tendency_advances_by_dt_c() {
        for heun in [false, true] {
            let x = pec_integrate(&2.0, PecOptions { dt: 0.3, heun_inner_dt: heun }, |_| 1.5);
            assert!((x - (2.0 + 0.3 * 1.5)).abs() < 1e-12);
        }
    }

    fn stack() -> FieldStack {
        let grid = GeoGrid::ocean(25.0, 44.0, 127.0, 163.0, 16, 16).unwrap();
        gen_synthetic(&grid, &SynthParams::default(), 3).unwrap()
    }

    #[test]
    fn zero_tendency_is_identity_and_advances_time() {
        let s = stack();
        let w = SurrogateWeights::zeros(4, 3);
        let model = Surrogate::new(&w, &s.grid).unwrap();
        let next = pec_step(&s.frames[0], &model, &s.grid, s.step_seconds, PecOptions::default()).unwrap();
        assert_eq!(next.data, s.frames[0].data);
        assert_eq!(next.timestamp, s.frames[0].timestamp + s.step_seconds as i64);
    }

    #[test]
    fn blow_up_is_reported() {
        let s = stack();
        let mut w = SurrogateWeights::zeros(2, 1);
        w.params.proj_b[0] = f64::MAX;
        w.params.lift_w[0] = 1.0;
        w.params.lin1_w[0] = 1.0;
        w.params.lin2_w[0] = 1.0;
        w.params.proj_w[0] = f64::MAX;
        let cfg = RolloutConfig::single_shot(2);
        let err = rollout(&s.frames[0], &s.grid, s.step_seconds, &cfg, &w).unwrap_err();
        assert!(matches!(err, ForecastError::BlowUp { step: 1, .. }), "{err}");
    }

    #[test]
    fn rollout_lengths_and_timestamps() {
        let s = stack();
        let w = SurrogateWeights::init(4, 3, [1.0; 4], 1);
        let r = rollout(&s.frames[0], &s.grid, s.step_seconds, &RolloutConfig::single_shot(5), &w).unwrap();
        assert_eq!(r.len(), 6);
        r.validate().unwrap();
        let r0 = rollout(&s.frames[0], &s.grid, s.step_seconds, &RolloutConfig::single_shot(0), &w).unwrap();
        assert_eq!(r0.frames, vec![s.frames[0].clone()]);
    }

    #[test]
    fn empty_schedule_equals_single_shot() {
        let s = stack();
        let w = SurrogateWeights::init(4, 3, [1.0; 4], 2);
        let a = rollout(&s.frames[0], &s.grid, s.step_seconds, &RolloutConfig::single_shot(4), &w).unwrap();
        let cfg = RolloutConfig {
            steps: 4,
            assimilation_schedule: vec![(2, Vec::new())],
            ..RolloutConfig::default()
        };
        let b = rollout(&s.frames[0], &s.grid, s.step_seconds, &cfg, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_outside_horizon_rejected() {
        let s = stack();
        let w = SurrogateWeights::zeros(2, 1);
        let cfg = RolloutConfig {
            steps: 3,
            assimilation_schedule: vec![(4, Vec::new())],
            ..RolloutConfig::default()
        };
        assert!(matches!(
            rollout(&s.frames[0], &s.grid, s.step_seconds, &cfg, &w),
            Err(ForecastError::InvalidConfig(_))
        ));
    }

    #[test]
    fn oracle_tendency_reproduces_truth() {
        let grid = GeoGrid::ocean(25.0, 44.0, 127.0, 163.0, 24, 24).unwrap();
        let truth = gen_synthetic(&grid, &SynthParams::default(), 11).unwrap();
        let cfg = RolloutConfig::single_shot(10);
        let r = rollout_with(&truth.frames[0], &grid, truth.step_seconds, &cfg, |k, _| {
            let (a, b) = (&truth.frames[k - 1].data, &truth.frames[k].data);
            b.iter().zip(a).map(|(b, a)| b - a).collect()
        })
        .unwrap();
        for (p, t) in r.frames.iter().zip(&truth.frames) {
            let mse = p.data.iter().zip(&t.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.data.len() as f64;
            assert!(mse.sqrt() < 1e-4, "{}", mse.sqrt());
        }
    }

    #[test]
    fn persistence_repeats_init() {
        let s = stack();
        let p = persistence_forecast(&s.frames[0], &s.grid, s.step_seconds, 3);
        assert_eq!(p.len(), 4);
        assert!(p.frames.iter().all(|f| f.data == s.frames[0].data));
        p.validate().unwrap();
        assert_eq!(persistence_forecast(&s.frames[0], &s.grid, s.step_seconds, 0).len(), 1);
    }
}
