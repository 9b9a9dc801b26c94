use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::LossEvaluator;
use super::network::{Params, Surrogate, SurrogateWeights};
use super::{ForecastError, PecOptions, Result};
use crate::gridio::{FieldStack, NCHAN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub step_size: f64,
    pub lambda_spec: f64,
    pub kmax: usize,
    pub width: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Modes kept by the spectral loss term; `None` keeps all.
    pub spectral_kmax: Option<usize>,
    pub pec: PecOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 4,
            step_size: 1e-3,
            lambda_spec: 0.1,
            kmax: 12,
            width: 16,
            seed: 0,
            optimizer: Optimizer::Adam,
            spectral_kmax: None,
            pec: PecOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.into()));
        if self.batch == 0 {
            return bad("batch must be >= 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be finite and > 0");
        }
        if self.kmax == 0 || self.width == 0 {
            return bad("kmax and width must be >= 1");
        }
        if !(self.pec.dt > 0.0) {
            return bad("dt must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: SurrogateWeights,
    /// Mean training loss per epoch, evaluated during the epoch.
    pub epoch_loss: Vec<f64>,
}

/// Loss and gradient over consecutive-frame pairs of one stack.
pub struct Trainer<'a> {
    stack: &'a FieldStack,
    loss: LossEvaluator,
    pec: PecOptions,
}

impl<'a> Trainer<'a> {
    pub fn new(stack: &'a FieldStack, cfg: &TrainConfig) -> Result<Self> {
        if stack.len() < 2 {
            return Err(ForecastError::InvalidConfig("dataset needs at least 2 frames".into()));
        }
        Ok(Self {
            stack,
            loss: LossEvaluator::new(&stack.grid, cfg.lambda_spec, cfg.spectral_kmax)?,
            pec: cfg.pec,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.stack.len() - 1
    }

    /// Mean loss over the given pair indices (pair `k` maps frame `k` to `k+1`).
    pub fn batch_loss(&self, weights: &SurrogateWeights, pairs: &[usize]) -> Result<f64> {
        let model = Surrogate::new(weights, &self.stack.grid)?;
        let mut total = 0.0;
        for &k in pairs {
            let x = &self.stack.frames[k].data;
            let pred = super::pec_integrate(x, self.pec, |v| model.tendency(v));
            total += self.loss.evaluate(&pred, &self.stack.frames[k + 1].data)?.total;
        }
        Ok(total / pairs.len() as f64)
    }

    /// Mean loss and its analytic gradient with respect to every weight.
    pub fn batch_loss_grad(&self, weights: &SurrogateWeights, pairs: &[usize]) -> Result<(f64, Params)> {
        let model = Surrogate::new(weights, &self.stack.grid)?;
        let mut grad = Params::zeros(weights.kmax, weights.width);
        let mut total = 0.0;
        let inner = if self.pec.heun_inner_dt { self.pec.dt } else { 1.0 };
        let half = 0.5 * self.pec.dt;
        for &k in pairs {
            let x = &self.stack.frames[k].data;
            // pred = x + half (a + b), a = N(x), b = N(x + inner a)
            let (a, tape_a) = model.forward(x);
            let z: Vec<f64> = x.iter().zip(&a).map(|(xv, av)| xv + inner * av).collect();
            let (b, tape_b) = model.forward(&z);
            let pred: Vec<f64> = x
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(xv, (av, bv))| xv + half * (av + bv))
                .collect();
            let (report, g_pred) = self.loss.evaluate_with_grad(&pred, &self.stack.frames[k + 1].data)?;
            total += report.total;
            let g_b: Vec<f64> = g_pred.iter().map(|g| half * g).collect();
            let g_z = model.backward(&tape_b, &g_b, &mut grad);
            let g_a: Vec<f64> = g_b.iter().zip(&g_z).map(|(gb, gz)| gb + inner * gz).collect();
            model.backward(&tape_a, &g_a, &mut grad);
        }
        let inv = 1.0 / pairs.len() as f64;
        grad.scale(inv);
        Ok((total * inv, grad))
    }
}

/// Per-channel RMS over ocean cells, used to condition the initial lift.
fn channel_rms(stack: &FieldStack) -> [f64; NCHAN] {
    let n = stack.grid.ncells();
    let mut out = [0.0; NCHAN];
    let mut count = 0usize;
    for f in &stack.frames {
        for (c, o) in out.iter_mut().enumerate() {
            for cell in 0..n {
                if stack.grid.mask[cell] {
                    *o += f.data[c * n + cell].powi(2);
                }
            }
        }
        count += stack.grid.n_ocean();
    }
    out.map(|s| (s / count.max(1) as f64).sqrt())
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kmax: usize, width: usize) -> Self {
        Self {
            m: Params::zeros(kmax, width),
            v: Params::zeros(kmax, width),
            t: 0,
        }
    }

    fn step(&mut self, w: &mut Params, g: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let groups = w.groups_mut().into_iter().zip(g.groups());
        let moments = self.m.groups_mut().into_iter().zip(self.v.groups_mut());
        for ((wg, gg), (mg, vg)) in groups.zip(moments) {
            for i in 0..wg.len() {
                mg[i] = Self::B1 * mg[i] + (1.0 - Self::B1) * gg[i];
                vg[i] = Self::B2 * vg[i] + (1.0 - Self::B2) * gg[i] * gg[i];
                wg[i] -= lr * (mg[i] / c1) / ((vg[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Fit surrogate weights to single-step transitions of `dataset`.
pub fn train(dataset: &FieldStack, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let trainer = Trainer::new(dataset, cfg)?;
    let mut weights = SurrogateWeights::init(cfg.kmax, cfg.width, channel_rms(dataset), cfg.seed);
    // fail early on grids that cannot host kmax
    Surrogate::new(&weights, &dataset.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11);
    let mut adam = Adam::new(cfg.kmax, cfg.width);
    let mut order: Vec<usize> = (0..trainer.n_pairs()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let (l, g) = trainer.batch_loss_grad(&weights, chunk)?;
            if !l.is_finite() || !g.all_finite() {
                return Err(ForecastError::Diverged {
                    epoch,
                    detail: format!("non-finite loss or gradient (loss = {l})"),
                    last_finite: Box::new(weights),
                });
            }
            sum += l * chunk.len() as f64;
            let mut next = weights.params.clone();
            match cfg.optimizer {
                Optimizer::Sgd => next.add_scaled(-cfg.step_size, &g),
                Optimizer::Adam => adam.step(&mut next, &g, cfg.step_size),
            }
            if !next.all_finite() {
                return Err(ForecastError::Diverged {
                    epoch,
                    detail: "weight update produced non-finite values".into(),
                    last_finite: Box::new(weights),
                });
            }
            weights.params = next;
        }
        let mean = sum / order.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6e}");
        epoch_loss.push(mean);
    }
    Ok(TrainOutcome { weights, epoch_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::GROUP_NAMES;
    use crate::gridio::{gen_synthetic, GeoGrid, SynthParams};

    fn dataset() -> FieldStack {
        let mut mask = vec![true; 256];
        for cell in [17, 18, 33, 200] {
            mask[cell] = false;
        }
        let grid = GeoGrid::new(30.0, 40.0, 130.0, 145.0, 16, 16, mask).unwrap();
        gen_synthetic(&grid, &SynthParams::default(), 4).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch: 2,
            kmax: 3,
            width: 4,
            lambda_spec: 0.3,
            spectral_kmax: Some(5),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let ds = dataset();
        for heun in [false, true] {
            let mut cfg = small_cfg();
            cfg.pec.heun_inner_dt = heun;
            cfg.pec.dt = if heun { 0.5 } else { 1.0 };
            let trainer = Trainer::new(&ds, &cfg).unwrap();
            let mut w = SurrogateWeights::init(cfg.kmax, cfg.width, channel_rms(&ds), 3);
            // larger projection so every group carries signal
            w.params.proj_w.iter_mut().for_each(|v| *v *= 30.0);
            let pairs = [0, 2];
            let (_, grad) = trainer.batch_loss_grad(&w, &pairs).unwrap();
            let eps = 1e-4;
            for (gi, name) in GROUP_NAMES.iter().enumerate() {
                let len = w.params.groups()[gi].len();
                let stride = (len / 7).max(1);
                for i in (0..len).step_by(stride) {
                    let mut wp = w.clone();
                    wp.params.groups_mut()[gi][i] += eps;
                    let up = trainer.batch_loss(&wp, &pairs).unwrap();
                    wp.params.groups_mut()[gi][i] -= 2.0 * eps;
                    let dn = trainer.batch_loss(&wp, &pairs).unwrap();
                    let fd = (up - dn) / (2.0 * eps);
                    let an = grad.groups()[gi][i];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    assert!(rel < 1e-4, "{name}[{i}] heun={heun}: fd {fd} analytic {an}");
                }
            }
        }
    }

    #[test]
    fn small_sgd_step_decreases_batch_loss() {
        let ds = dataset();
        let cfg = small_cfg();
        let trainer = Trainer::new(&ds, &cfg).unwrap();
        let w = SurrogateWeights::init(cfg.kmax, cfg.width, channel_rms(&ds), 1);
        let pairs = [0, 1, 2];
        let (l0, g) = trainer.batch_loss_grad(&w, &pairs).unwrap();
        let mut step = 1.0;
        let mut decreased = false;
        for _ in 0..=20 {
            let mut wn = w.clone();
            wn.params.add_scaled(-step, &g);
            if trainer.batch_loss(&wn, &pairs).unwrap() < l0 {
                decreased = true;
                break;
            }
            step *= 0.5;
        }
        assert!(decreased);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let ds = dataset();
        let cfg = TrainConfig {
            epochs: 6,
            step_size: 3e-3,
            ..small_cfg()
        };
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.epoch_loss, b.epoch_loss);
        assert!(a.epoch_loss.last().unwrap() < a.epoch_loss.first().unwrap());
    }

    #[test]
    fn divergence_returns_last_finite_weights() {
        let ds = dataset();
        let cfg = TrainConfig {
            epochs: 50,
            step_size: 1e12,
            optimizer: Optimizer::Sgd,
            ..small_cfg()
        };
        match train(&ds, &cfg) {
            Err(ForecastError::Diverged { last_finite, .. }) => assert!(last_finite.params.all_finite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_single_frame_dataset() {
        let mut ds = dataset();
        ds.frames.truncate(1);
        assert!(matches!(train(&ds, &small_cfg()), Err(ForecastError::InvalidConfig(_))));
    }
}
