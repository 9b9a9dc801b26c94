//! Forecast skill scores, spectral diagnostics and multi-initialisation
//! skill experiments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assimilate::{sample_observations, AssimConfig, AssimError};
use crate::fft::{signed_freq, Fft2};
use crate::forecast::{persistence_forecast, rollout_with, ForecastError, PecOptions, RolloutConfig, Surrogate, SurrogateWeights};
use crate::gridio::{Channel, FieldStack, GeoGrid, WaveFrame, NCHAN};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("degenerate anomaly: {0} has zero variance over ocean")]
    DegenerateAnomaly(&'static str),
    #[error("truth has zero variance over ocean")]
    ZeroVariance,
    #[error("empty ocean mask")]
    EmptyOcean,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("initialisation {init}: {source}")]
    Rollout {
        init: usize,
        #[source]
        source: ForecastError,
    },
    #[error("initialisation {init}: {source}")]
    Sampling {
        init: usize,
        #[source]
        source: AssimError,
    },
    #[error("initialisation {init}, lead {lead}: {source}")]
    Score {
        init: usize,
        lead: usize,
        #[source]
        source: Box<MetricsError>,
    },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check_shapes(a: &WaveFrame, b: &WaveFrame, mask: &[bool]) -> Result<()> {
    if a.ncells() != mask.len() || b.ncells() != mask.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "frames have {} and {} cells, mask has {}",
            a.ncells(),
            b.ncells(),
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(MetricsError::EmptyOcean);
    }
    Ok(())
}

fn ocean_values<'a>(plane: &'a [f64], mask: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    plane.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v)
}

/// Pearson correlation of wave-height anomalies over ocean cells.
pub fn acc(forecast: &WaveFrame, truth: &WaveFrame, climatology: &WaveFrame, mask: &[bool]) -> Result<f64> {
    check_shapes(forecast, truth, mask)?;
    check_shapes(forecast, climatology, mask)?;
    let c = climatology.channel(Channel::Vhm0);
    let fa: Vec<f64> = ocean_values(forecast.channel(Channel::Vhm0), mask)
        .zip(ocean_values(c, mask))
        .map(|(f, c)| f - c)
        .collect();
    let ta: Vec<f64> = ocean_values(truth.channel(Channel::Vhm0), mask)
        .zip(ocean_values(c, mask))
        .map(|(t, c)| t - c)
        .collect();
    let n = fa.len() as f64;
    let mf = fa.iter().sum::<f64>() / n;
    let mt = ta.iter().sum::<f64>() / n;
    let (mut sff, mut stt, mut sft) = (0.0, 0.0, 0.0);
    for (f, t) in fa.iter().zip(&ta) {
        let (df, dt) = (f - mf, t - mt);
        sff += df * df;
        stt += dt * dt;
        sft += df * dt;
    }
    if sff <= 0.0 {
        return Err(MetricsError::DegenerateAnomaly("forecast"));
    }
    if stt <= 0.0 {
        return Err(MetricsError::DegenerateAnomaly("truth"));
    }
    Ok((sft / (sff.sqrt() * stt.sqrt())).clamp(-1.0, 1.0))
}

/// Mean dot product of the unit direction vectors over ocean cells.
pub fn cosine_direction(pred: &WaveFrame, truth: &WaveFrame, mask: &[bool]) -> Result<f64> {
    check_shapes(pred, truth, mask)?;
    let (px, py) = (pred.channel(Channel::Vmdrx), pred.channel(Channel::Vmdry));
    let (tx, ty) = (truth.channel(Channel::Vmdrx), truth.channel(Channel::Vmdry));
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in (0..mask.len()).filter(|&c| mask[c]) {
        sum += px[c] * tx[c] + py[c] * ty[c];
        n += 1;
    }
    Ok((sum / n as f64).clamp(-1.0, 1.0))
}

/// Ocean RMSE of wave height divided by the ocean std of the truth.
pub fn nrmse(pred: &WaveFrame, truth: &WaveFrame, mask: &[bool]) -> Result<f64> {
    check_shapes(pred, truth, mask)?;
    let p: Vec<f64> = ocean_values(pred.channel(Channel::Vhm0), mask).collect();
    let t: Vec<f64> = ocean_values(truth.channel(Channel::Vhm0), mask).collect();
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let mse = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    Ok((mse / var).sqrt())
}

/// Energy per integer wavenumber annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEnergy {
    /// Mean-square contribution of the zero mode.
    pub k0: f64,
    /// `bins[k - 1]` holds annulus `k - 0.5 <= |k| < k + 0.5`.
    pub bins: Vec<f64>,
    /// Energy in modes with `|k| >= kmax + 0.5`.
    pub beyond: f64,
}

impl SpectralEnergy {
    pub fn total(&self) -> f64 {
        self.k0 + self.bins.iter().sum::<f64>() + self.beyond
    }

    pub fn kmax(&self) -> usize {
        self.bins.len()
    }

    /// Energy of bin `k` (1-based); zero outside the table.
    pub fn bin(&self, k: usize) -> f64 {
        if k == 0 {
            self.k0
        } else {
            self.bins.get(k - 1).copied().unwrap_or(0.0)
        }
    }
}

pub const DEFAULT_SPECTRAL_KMAX: usize = 100;

/// Annulus spectrum of a row-major `nlat x nlon` plane, normalised so that
/// `total()` equals the sum of squares of the plane.
pub fn spectral_energy_plane(plane: &[f64], nlat: usize, nlon: usize, kmax: usize) -> SpectralEnergy {
    assert_eq!(plane.len(), nlat * nlon, "plane does not match shape");
    let fft = Fft2::new(nlat, nlon);
    let spec = fft.forward_real(plane);
    let n = (nlat * nlon) as f64;
    let mut out = SpectralEnergy {
        k0: 0.0,
        bins: vec![0.0; kmax],
        beyond: 0.0,
    };
    for r in 0..nlat {
        let ky = signed_freq(r, nlat) as f64;
        for c in 0..nlon {
            let kx = signed_freq(c, nlon) as f64;
            let e = spec[r * nlon + c].norm_sqr() / n;
            // annulus k - 0.5 <= |k| < k + 0.5 is |k| + 0.5 floored
            let k = ((kx * kx + ky * ky).sqrt() + 0.5).floor() as usize;
            match k {
                0 => out.k0 += e,
                k if k <= kmax => out.bins[k - 1] += e,
                _ => out.beyond += e,
            }
        }
    }
    out
}

pub fn spectral_energy(frame: &WaveFrame, grid: &GeoGrid, channel: Channel, kmax: usize) -> SpectralEnergy {
    spectral_energy_plane(frame.channel(channel), grid.nlat, grid.nlon, kmax)
}

/// Per-cell mean over every frame of `stack`.
pub fn climatology(stack: &FieldStack) -> Result<WaveFrame> {
    let first = stack
        .frames
        .first()
        .ok_or_else(|| MetricsError::InvalidConfig("empty stack".into()))?;
    let mut out = WaveFrame::zeros(first.timestamp, first.ncells());
    for f in &stack.frames {
        for (o, v) in out.data.iter_mut().zip(&f.data) {
            *o += v;
        }
    }
    let n = stack.frames.len() as f64;
    out.data.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// One score as a function of lead, aggregated across initialisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCurve {
    /// `acc`, `cosine` or `nrmse`.
    pub metric: String,
    /// `model`, `persistence` or a data-assimilation label.
    pub source: String,
    pub lead_steps: Vec<usize>,
    /// Mean across initialisations.
    pub values: Vec<f64>,
    /// Population standard deviation across initialisations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
}

impl SkillCurve {
    pub fn name(&self) -> String {
        format!("{}/{}", self.metric, self.source)
    }

    pub fn at(&self, lead: usize) -> Option<f64> {
        self.lead_steps.iter().position(|&l| l == lead).map(|i| self.values[i])
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// Assimilation variant: truth-sampled observations every `every` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaVariant {
    pub label: String,
    pub every: usize,
    pub fraction: f64,
    pub seed: u64,
}

impl DaVariant {
    pub fn new(every: usize, fraction: f64, seed: u64) -> Self {
        Self {
            label: format!("da{}pct-every{}", (fraction * 100.0).round(), every),
            every,
            fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkillConfig {
    /// Maximum lead in steps.
    pub steps: usize,
    /// First initialisation frame in the truth stack.
    pub first_init: usize,
    /// Frames between initialisations; `None` spreads them evenly.
    pub init_stride: Option<usize>,
    pub pec: PecOptions,
    pub assim: AssimConfig,
    pub da: Vec<DaVariant>,
}

impl Default for SkillConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            first_init: 0,
            init_stride: None,
            pec: PecOptions::default(),
            assim: AssimConfig::default(),
            da: Vec::new(),
        }
    }
}

impl SkillConfig {
    /// Initialisation frame indices for `n_inits` windows over `len` frames.
    pub fn init_indices(&self, len: usize, n_inits: usize) -> Result<Vec<usize>> {
        if n_inits == 0 {
            return Err(MetricsError::InvalidConfig("n_inits must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(MetricsError::InvalidConfig("steps must be >= 1".into()));
        }
        let last_start = len
            .checked_sub(self.steps + 1)
            .filter(|&l| l >= self.first_init)
            .ok_or_else(|| {
                MetricsError::InvalidConfig(format!("{len} frames cannot hold a {}-step window", self.steps))
            })?;
        let span = last_start - self.first_init;
        let stride = match self.init_stride {
            Some(s) if s == 0 => return Err(MetricsError::InvalidConfig("init_stride must be >= 1".into())),
            Some(s) => s,
            None if n_inits == 1 => 1,
            None => span / (n_inits - 1),
        };
        if stride == 0 || (n_inits - 1) * stride > span {
            return Err(MetricsError::InvalidConfig(format!(
                "{len} frames cannot hold {n_inits} windows of {} steps",
                self.steps
            )));
        }
        Ok((0..n_inits).map(|k| self.first_init + k * stride).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    pub n_inits: usize,
    pub init_frames: Vec<usize>,
    pub curves: Vec<SkillCurve>,
}

pub const SKILL_CSV_HEADER: &str = "metric,lead,mean,std";

impl SkillReport {
    pub fn curve(&self, metric: &str, source: &str) -> Option<&SkillCurve> {
        self.curves.iter().find(|c| c.metric == metric && c.source == source)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SKILL_CSV_HEADER);
        out.push('\n');
        for c in &self.curves {
            let name = c.name();
            for (i, lead) in c.lead_steps.iter().enumerate() {
                let std = c.std.as_ref().map(|s| s[i]).unwrap_or(0.0);
                out.push_str(&format!("{name},{lead},{},{std}\n", c.values[i]));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Scores of each lead for one forecast, indexed `[metric][lead]`.
fn score_rollout(
    forecast: &FieldStack,
    truth: &FieldStack,
    start: usize,
    clim: &WaveFrame,
    init: usize,
) -> Result<[Vec<f64>; 3]> {
    let mask = &truth.grid.mask;
    let mut out: [Vec<f64>; 3] = Default::default();
    for (lead, f) in forecast.frames.iter().enumerate() {
        let t = &truth.frames[start + lead];
        let wrap = |source| MetricsError::Score {
            init,
            lead,
            source: Box::new(source),
        };
        out[0].push(acc(f, t, clim, mask).map_err(wrap)?);
        out[1].push(cosine_direction(f, t, mask).map_err(wrap)?);
        out[2].push(nrmse(f, t, mask).map_err(wrap)?);
    }
    Ok(out)
}

const METRIC_NAMES: [&str; 3] = ["acc", "cosine", "nrmse"];

fn aggregate(source: &str, per_init: &[[Vec<f64>; 3]], steps: usize) -> Vec<SkillCurve> {
    let n = per_init.len() as f64;
    (0..3)
        .map(|m| {
            let mut mean = vec![0.0; steps + 1];
            let mut std = vec![0.0; steps + 1];
            for lead in 0..=steps {
                mean[lead] = per_init.iter().map(|r| r[m][lead]).sum::<f64>() / n;
                let var = per_init.iter().map(|r| (r[m][lead] - mean[lead]).powi(2)).sum::<f64>() / n;
                std[lead] = var.sqrt();
            }
            SkillCurve {
                metric: METRIC_NAMES[m].into(),
                source: source.into(),
                lead_steps: (0..=steps).collect(),
                values: mean,
                std: Some(std),
            }
        })
        .collect()
}

/// Skill of an arbitrary tendency against persistence and assimilation
/// variants, over `n_inits` windows of `truth`.
pub fn skill_experiment_with(
    truth: &FieldStack,
    n_inits: usize,
    cfg: &SkillConfig,
    clim: &WaveFrame,
    tendency: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<SkillReport> {
    for v in &cfg.da {
        if v.every == 0 || v.every > cfg.steps {
            return Err(MetricsError::InvalidConfig(format!("{}: interval must be in [1, steps]", v.label)));
        }
    }
    if clim.ncells() != truth.grid.ncells() || clim.data.len() != NCHAN * truth.grid.ncells() {
        return Err(MetricsError::ShapeMismatch("climatology does not match grid".into()));
    }
    let starts = cfg.init_indices(truth.len(), n_inits)?;
    let grid = &truth.grid;
    let mut model = Vec::with_capacity(n_inits);
    let mut persist = Vec::with_capacity(n_inits);
    let mut da: Vec<Vec<[Vec<f64>; 3]>> = vec![Vec::with_capacity(n_inits); cfg.da.len()];
    for (init, &start) in starts.iter().enumerate() {
        let x0 = &truth.frames[start];
        let base = RolloutConfig {
            steps: cfg.steps,
            pec: cfg.pec,
            assimilation_schedule: Vec::new(),
            assim: cfg.assim,
        };
        let run = |rc: &RolloutConfig| {
            rollout_with(x0, grid, truth.step_seconds, rc, |_, x| tendency(x))
                .map_err(|source| MetricsError::Rollout { init, source })
        };
        model.push(score_rollout(&run(&base)?, truth, start, clim, init)?);
        let p = persistence_forecast(x0, grid, truth.step_seconds, cfg.steps);
        persist.push(score_rollout(&p, truth, start, clim, init)?);
        for (vi, v) in cfg.da.iter().enumerate() {
            let mut schedule = Vec::new();
            for step in (v.every..=cfg.steps).step_by(v.every) {
                let seed = v.seed ^ ((init as u64) << 32) ^ step as u64;
                let obs = sample_observations(&truth.frames[start + step], grid, v.fraction, seed)
                    .map_err(|source| MetricsError::Sampling { init, source })?;
                schedule.push((step, obs));
            }
            let rc = RolloutConfig {
                assimilation_schedule: schedule,
                ..base.clone()
            };
            da[vi].push(score_rollout(&run(&rc)?, truth, start, clim, init)?);
        }
    }
    let mut curves = aggregate("model", &model, cfg.steps);
    curves.extend(aggregate("persistence", &persist, cfg.steps));
    for (v, scores) in cfg.da.iter().zip(&da) {
        curves.extend(aggregate(&v.label, scores, cfg.steps));
    }
    Ok(SkillReport {
        n_inits,
        init_frames: starts,
        curves,
    })
}

/// Skill of the learned surrogate.
pub fn skill_experiment(
    truth: &FieldStack,
    weights: &SurrogateWeights,
    n_inits: usize,
    cfg: &SkillConfig,
    clim: &WaveFrame,
) -> Result<SkillReport> {
    let model = Surrogate::new(weights, &truth.grid).map_err(|source| MetricsError::Rollout { init: 0, source })?;
    skill_experiment_with(truth, n_inits, cfg, clim, |x| model.tendency(x))
}

/// Score a precomputed forecast stack against the truth frames sharing its
/// timestamps. Leads run from 0 to `forecast.len() - 1`; all curves carry
/// the `source` label and no spread.
pub fn score_forecast(forecast: &FieldStack, truth: &FieldStack, clim: &WaveFrame, source: &str) -> Result<SkillReport> {
    if forecast.grid != truth.grid {
        return Err(MetricsError::ShapeMismatch("forecast and truth grids differ".into()));
    }
    if clim.data.len() != NCHAN * truth.grid.ncells() {
        return Err(MetricsError::ShapeMismatch("climatology does not match grid".into()));
    }
    let Some(first) = forecast.frames.first() else {
        return Err(MetricsError::InvalidConfig("forecast has no frames".into()));
    };
    let start = truth
        .frames
        .iter()
        .position(|f| f.timestamp == first.timestamp)
        .ok_or_else(|| MetricsError::InvalidConfig(format!("truth has no frame at t={}", first.timestamp)))?;
    for (lead, f) in forecast.frames.iter().enumerate() {
        match truth.frames.get(start + lead) {
            Some(t) if t.timestamp == f.timestamp => {}
            _ => {
                return Err(MetricsError::InvalidConfig(format!(
                    "truth does not cover lead {lead} (t={})",
                    f.timestamp
                )))
            }
        }
    }
    let scores = score_rollout(forecast, truth, start, clim, 0)?;
    let curves = METRIC_NAMES
        .iter()
        .zip(scores)
        .map(|(m, values)| SkillCurve {
            metric: (*m).into(),
            source: source.into(),
            lead_steps: (0..forecast.len()).collect(),
            values,
            std: None,
        })
        .collect();
    Ok(SkillReport {
        n_inits: 1,
        init_frames: vec![start],
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridio::{encode_direction, gen_synthetic, SynthParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GeoGrid {
        GeoGrid::ocean(30.0, 30.0 + n as f64, 140.0, 140.0 + n as f64, n, n).unwrap()
    }

    fn random_frame(n: usize, seed: u64) -> WaveFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = n * n;
        let mut f = WaveFrame::zeros(0, cells);
        for c in 0..cells {
            f.set(Channel::Vhm0, c, rng.random_range(0.5..4.0));
            let (x, y) = encode_direction(rng.random_range(0.0..360.0));
            f.set(Channel::Vmdrx, c, x);
            f.set(Channel::Vmdry, c, y);
            f.set(Channel::Vtpk, c, rng.random_range(5.0..12.0));
        }
        f
    }

    fn with_heights(base: &WaveFrame, h: impl Fn(usize, f64) -> f64) -> WaveFrame {
        let mut f = base.clone();
        for c in 0..f.ncells() {
            let v = f.get(Channel::Vhm0, c);
            f.set(Channel::Vhm0, c, h(c, v));
        }
        f
    }

    #[test]
    fn acc_examples() {
        let g = grid(8);
        let truth = random_frame(8, 1);
        let clim = random_frame(8, 2);
        assert!((acc(&truth, &truth, &clim, &g.mask).unwrap() - 1.0).abs() < 1e-12);
        let mirrored = with_heights(&truth, |c, v| 2.0 * clim.get(Channel::Vhm0, c) - v);
        assert!((acc(&mirrored, &truth, &clim, &g.mask).unwrap() + 1.0).abs() < 1e-12);
        let err = acc(&clim, &truth, &clim, &g.mask).unwrap_err();
        assert!(err.to_string().contains("degenerate anomaly"));
    }

    #[test]
    fn acc_ignores_land() {
        let mut g = grid(8);
        g.mask[5] = false;
        let truth = random_frame(8, 1);
        let clim = random_frame(8, 2);
        let f = with_heights(&truth, |c, v| if c == 5 { -100.0 } else { v });
        assert!((acc(&f, &truth, &clim, &g.mask).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let g = grid(6);
        let t = random_frame(6, 3);
        assert!((cosine_direction(&t, &t, &g.mask).unwrap() - 1.0).abs() < 1e-12);
        let mut opp = t.clone();
        let mut orth = t.clone();
        for c in 0..t.ncells() {
            let (x, y) = (t.get(Channel::Vmdrx, c), t.get(Channel::Vmdry, c));
            opp.set(Channel::Vmdrx, c, -x);
            opp.set(Channel::Vmdry, c, -y);
            orth.set(Channel::Vmdrx, c, -y);
            orth.set(Channel::Vmdry, c, x);
        }
        assert!((cosine_direction(&opp, &t, &g.mask).unwrap() + 1.0).abs() < 1e-12);
        assert!(cosine_direction(&orth, &t, &g.mask).unwrap().abs() < 1e-12);
        let land = GeoGrid::new(0.0, 5.0, 0.0, 5.0, 6, 6, vec![false; 36]).unwrap();
        assert!(matches!(cosine_direction(&t, &t, &land.mask), Err(MetricsError::EmptyOcean)));
    }

    #[test]
    fn nrmse_examples() {
        let g = grid(8);
        let t = random_frame(8, 4);
        assert_eq!(nrmse(&t, &t, &g.mask).unwrap(), 0.0);
        let h = t.channel(Channel::Vhm0);
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        let sd = (h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h.len() as f64).sqrt();
        let shifted = with_heights(&t, |_, v| v + sd);
        assert!((nrmse(&shifted, &t, &g.mask).unwrap() - 1.0).abs() < 1e-12);
        let flat = with_heights(&t, |_, _| 2.0);
        assert!(matches!(nrmse(&t, &flat, &g.mask), Err(MetricsError::ZeroVariance)));
    }

    #[test]
    fn spectrum_of_constant_and_pure_mode() {
        let n = 32;
        let flat = vec![3.0; n * n];
        let s = spectral_energy_plane(&flat, n, n, 100);
        assert!(s.bins.iter().all(|&b| b.abs() < 1e-18));
        assert!((s.k0 - 9.0 * (n * n) as f64).abs() < 1e-8);
        let mut pure = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let phase = std::f64::consts::TAU * (3.0 * c as f64 + 4.0 * r as f64) / n as f64;
                pure[r * n + c] = phase.cos();
            }
        }
        let s = spectral_energy_plane(&pure, n, n, 100);
        let total = s.total();
        assert!((s.bin(5) - total).abs() < 1e-9 * total);
        assert!(s.bins.iter().enumerate().all(|(i, &b)| i == 4 || b < 1e-18));
    }

    #[test]
    fn small_grid_bins_above_nyquist_are_empty() {
        let n = 8;
        let s = spectral_energy_plane(&random_frame(n, 7).data[..n * n], n, n, 100);
        // the corner mode has |k| = 4·sqrt(2) ≈ 5.66
        assert!(s.bins[6..].iter().all(|&b| b == 0.0));
        assert_eq!(s.beyond, 0.0);
        let trimmed = spectral_energy_plane(&random_frame(n, 7).data[..n * n], n, n, 3);
        assert!(trimmed.beyond > 0.0);
    }

    #[test]
    fn climatology_is_cellwise_mean() {
        let g = grid(4);
        let frames = vec![random_frame(4, 1), random_frame(4, 2), random_frame(4, 3)];
        let stack = FieldStack {
            grid: g,
            frames: frames.clone(),
            step_seconds: 3600,
        };
        let c = climatology(&stack).unwrap();
        for i in 0..c.data.len() {
            let m = (frames[0].data[i] + frames[1].data[i] + frames[2].data[i]) / 3.0;
            assert!((c.data[i] - m).abs() < 1e-15);
        }
    }

    fn bench(n: usize, nframes: usize, velocity: [f64; 2], seed: u64) -> FieldStack {
        let p = SynthParams {
            velocity,
            seed,
            ..SynthParams::default()
        };
        gen_synthetic(&grid(n), &p, nframes).unwrap()
    }

    #[test]
    fn init_windows() {
        let cfg = SkillConfig {
            steps: 4,
            ..SkillConfig::default()
        };
        assert_eq!(cfg.init_indices(20, 4).unwrap(), vec![0, 5, 10, 15]);
        assert_eq!(cfg.init_indices(5, 1).unwrap(), vec![0]);
        assert!(cfg.init_indices(4, 1).is_err());
        assert!(cfg.init_indices(10, 7).is_err());
    }

    #[test]
    fn lead_zero_and_frozen_truth() {
        let truth = bench(12, 12, [0.0, 0.0], 3);
        let frozen = FieldStack {
            frames: (0..12)
                .map(|k| WaveFrame {
                    timestamp: truth.frames[0].timestamp + k * 3600,
                    data: truth.frames[0].data.clone(),
                })
                .collect(),
            ..truth.clone()
        };
        let clim = bench(12, 1, [0.0, 0.0], 9).frames[0].clone();
        let cfg = SkillConfig {
            steps: 5,
            ..SkillConfig::default()
        };
        let zeros = |x: &[f64]| vec![0.0; x.len()];
        let r = skill_experiment_with(&frozen, 3, &cfg, &clim, zeros).unwrap();
        for src in ["model", "persistence"] {
            let a = r.curve("acc", src).unwrap();
            assert!(a.values.iter().all(|v| (v - 1.0).abs() < 1e-12), "{src}");
            assert_eq!(r.curve("nrmse", src).unwrap().at(0), Some(0.0));
        }
        let csv = r.to_csv();
        assert!(csv.starts_with("metric,lead,mean,std\n"));
        assert_eq!(csv.lines().count(), 1 + 6 * 6);
    }

    #[test]
    fn damped_model_with_assimilation() {
        let truth = bench(16, 30, [0.8, 0.4], 1);
        let clim = climatology(&truth).unwrap();
        let cfg = SkillConfig {
            steps: 8,
            da: vec![DaVariant::new(3, 0.2, 5)],
            ..SkillConfig::default()
        };
        // relaxes towards climatology
        let clim_data = clim.data.clone();
        let damped = move |x: &[f64]| {
            x.iter().zip(&clim_data).map(|(v, c)| 0.25 * (c - v)).collect::<Vec<f64>>()
        };
        let r = skill_experiment_with(&truth, 4, &cfg, &clim, damped).unwrap();
        let p = r.curve("nrmse", "persistence").unwrap();
        let m = r.curve("nrmse", "model").unwrap();
        let d = r.curve("nrmse", "da20pct-every3").unwrap();
        assert!(p.at(8).unwrap() > 0.0 && m.at(8).unwrap() > 0.0);
        for lead in 3..=8 {
            assert!(d.at(lead).unwrap() <= m.at(lead).unwrap() + 1e-12, "lead {lead}");
        }
        let a = r.curve("acc", "model").unwrap();
        assert!(a.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(r.to_json().contains("\"metric\": \"acc\""));
    }

    #[test]
    fn scores_a_stored_forecast() {
        let truth = bench(16, 12, [0.8, 0.4], 1);
        let clim = climatology(&truth).unwrap();
        let fc = persistence_forecast(&truth.frames[2], &truth.grid, truth.step_seconds, 4);
        let r = score_forecast(&fc, &truth, &clim, "file").unwrap();
        assert_eq!(r.init_frames, vec![2]);
        let n = r.curve("nrmse", "file").unwrap();
        assert_eq!(n.values[0], 0.0);
        let cfg = SkillConfig {
            steps: 4,
            first_init: 2,
            ..SkillConfig::default()
        };
        let exp = skill_experiment_with(&truth, 1, &cfg, &clim, |x| vec![0.0; x.len()]).unwrap();
        assert_eq!(n.values, exp.curve("nrmse", "persistence").unwrap().values);
        assert!(r.to_csv().starts_with("metric,lead,mean,std\nacc/file,0,"));

        let late = persistence_forecast(&truth.frames[9], &truth.grid, truth.step_seconds, 4);
        assert!(matches!(score_forecast(&late, &truth, &clim, "x"), Err(MetricsError::InvalidConfig(_))));
    }

    #[test]
    fn rejects_bad_variants() {
        let truth = bench(8, 10, [0.5, 0.0], 1);
        let clim = climatology(&truth).unwrap();
        let cfg = SkillConfig {
            steps: 4,
            da: vec![DaVariant::new(5, 0.2, 0)],
            ..SkillConfig::default()
        };
        assert!(matches!(
            skill_experiment_with(&truth, 2, &cfg, &clim, |x| vec![0.0; x.len()]),
            Err(MetricsError::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn acc_affine_invariance(seed in 0u64..500, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let g = grid(6);
            let (f, t, c) = (random_frame(6, seed), random_frame(6, seed + 1000), random_frame(6, seed + 2000));
            let tr = |x: &WaveFrame| with_heights(x, |_, v| a * v + b);
            let base = acc(&f, &t, &c, &g.mask).unwrap();
            let moved = acc(&tr(&f), &tr(&t), &tr(&c), &g.mask).unwrap();
            prop_assert!((base - moved).abs() < 1e-10);
        }

        #[test]
        fn cosine_rotation_invariance(seed in 0u64..500, deg in 0.0f64..360.0) {
            let g = grid(6);
            let (p, t) = (random_frame(6, seed), random_frame(6, seed + 7));
            let (s, co) = deg.to_radians().sin_cos();
            let rot = |x: &WaveFrame| {
                let mut r = x.clone();
                for c in 0..x.ncells() {
                    let (vx, vy) = (x.get(Channel::Vmdrx, c), x.get(Channel::Vmdry, c));
                    r.set(Channel::Vmdrx, c, co * vx - s * vy);
                    r.set(Channel::Vmdry, c, s * vx + co * vy);
                }
                r
            };
            let base = cosine_direction(&p, &t, &g.mask).unwrap();
            let turned = cosine_direction(&rot(&p), &rot(&t), &g.mask).unwrap();
            prop_assert!((base - turned).abs() < 1e-12);
        }

        #[test]
        fn nrmse_scale_invariance(seed in 0u64..500, k in 0.01f64..100.0) {
            let g = grid(6);
            let (p, t) = (random_frame(6, seed), random_frame(6, seed + 3));
            let sc = |x: &WaveFrame| with_heights(x, |_, v| k * v);
            let base = nrmse(&p, &t, &g.mask).unwrap();
            prop_assert!((base - nrmse(&sc(&p), &sc(&t), &g.mask).unwrap()).abs() < 1e-10 * base);
        }

        #[test]
        fn parseval(seed in 0u64..500, nlat in 3usize..24, nlon in 3usize..24, kmax in 1usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plane: Vec<f64> = (0..nlat * nlon).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = spectral_energy_plane(&plane, nlat, nlon, kmax);
            let ss: f64 = plane.iter().map(|v| v * v).sum();
            prop_assert!((s.total() - ss).abs() <= 1e-8 * ss);
        }
    }
}
