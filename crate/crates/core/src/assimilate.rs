//! Gaussian kernel-density correction of a forecast frame toward sparse
//! point observations.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridio::{Channel, GeoGrid, WaveFrame, NCHAN};

#[derive(Debug, Error)]
pub enum AssimError {
    #[error("empty grid: no ocean cells")]
    EmptyGrid,
    #[error("unknown channel id {0:?}")]
    UnknownChannel(String),
    #[error("observation {index} at ({lat}, {lon}) lies outside the grid")]
    OutsideGrid { index: usize, lat: f64, lon: f64 },
    #[error("observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("frame does not match grid")]
    ShapeMismatch,
    #[error("csv: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AssimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub lat: f64,
    pub lon: f64,
    pub time: i64,
    pub channel: Channel,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssimConfig {
    /// Gaussian standard deviation in grid-cell units.
    pub bandwidth_cells: f64,
    /// Upper bound on the blending weight, in (0, 1].
    pub influence_cap: f64,
}

impl Default for AssimConfig {
    fn default() -> Self {
        Self {
            bandwidth_cells: 1.5,
            influence_cap: 1.0,
        }
    }
}

impl AssimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_cells > 0.0 && self.bandwidth_cells.is_finite()) {
            return Err(AssimError::InvalidConfig("bandwidth_cells must be finite and > 0".into()));
        }
        if !(self.influence_cap > 0.0 && self.influence_cap <= 1.0) {
            return Err(AssimError::InvalidConfig("influence_cap must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

const DENSITY_FLOOR: f64 = 1e-12;

/// Blend `frame` toward `obs`.
///
/// Per channel and ocean cell `g`: `w_i = exp(-d^2 / 2 sigma^2)` with `d` the
/// index-space distance to observation cell `g_i`, `D = sum w_i`,
/// `I = sum w_i (y_i - x(g_i)) / max(D, 1e-12)` and
/// `x_a = x + min(D, cap) I`. Directions are renormalised afterwards.
pub fn rbf_assimilate(frame: &WaveFrame, grid: &GeoGrid, obs: &[Observation], cfg: &AssimConfig) -> Result<WaveFrame> {
    cfg.validate()?;
    if grid.n_ocean() == 0 {
        return Err(AssimError::EmptyGrid);
    }
    if frame.ncells() != grid.ncells() {
        return Err(AssimError::ShapeMismatch);
    }
    // (cell, innovation) per channel, in observation order
    let mut by_channel: [Vec<(usize, f64)>; NCHAN] = Default::default();
    for (index, o) in obs.iter().enumerate() {
        if !o.value.is_finite() {
            return Err(AssimError::InvalidObservation {
                index,
                reason: "non-finite value".into(),
            });
        }
        if o.channel == Channel::Vhm0 && o.value < 0.0 {
            return Err(AssimError::InvalidObservation {
                index,
                reason: "negative wave height".into(),
            });
        }
        let cell = grid.snap(o.lat, o.lon).ok_or(AssimError::OutsideGrid {
            index,
            lat: o.lat,
            lon: o.lon,
        })?;
        if !grid.is_ocean(cell) {
            log::warn!("observation {index} at ({}, {}) snaps to land, rejected", o.lat, o.lon);
            continue;
        }
        by_channel[o.channel.index()].push((cell, o.value - frame.get(o.channel, cell)));
    }

    let mut out = frame.clone();
    let n = grid.ncells();
    let inv_two_var = 1.0 / (2.0 * cfg.bandwidth_cells * cfg.bandwidth_cells);
    for (c, list) in by_channel.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let located: Vec<(f64, f64, f64)> = list
            .iter()
            .map(|&(cell, innov)| {
                let (i, j) = grid.ij(cell);
                (i as f64, j as f64, innov)
            })
            .collect();
        let plane = &mut out.data[c * n..(c + 1) * n];
        for (cell, v) in plane.iter_mut().enumerate() {
            if !grid.mask[cell] {
                continue;
            }
            let (gi, gj) = grid.ij(cell);
            let (gi, gj) = (gi as f64, gj as f64);
            let mut density = 0.0;
            let mut weighted = 0.0;
            for &(oi, oj, innov) in &located {
                let d2 = (gi - oi).powi(2) + (gj - oj).powi(2);
                let w = (-d2 * inv_two_var).exp();
                density += w;
                weighted += w * innov;
            }
            let innovation = weighted / density.max(DENSITY_FLOOR);
            *v += density.min(cfg.influence_cap) * innovation;
        }
    }
    if !by_channel[Channel::Vmdrx.index()].is_empty() || !by_channel[Channel::Vmdry.index()].is_empty() {
        out.renormalize_directions(&grid.mask);
    }
    Ok(out)
}

/// Draw `round(fraction * n_ocean)` distinct ocean cells uniformly and emit
/// all four channel values of `truth` at each.
pub fn sample_observations(truth: &WaveFrame, grid: &GeoGrid, fraction: f64, seed: u64) -> Result<Vec<Observation>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AssimError::InvalidConfig("fraction must lie in (0, 1]".into()));
    }
    if truth.ncells() != grid.ncells() {
        return Err(AssimError::ShapeMismatch);
    }
    let ocean: Vec<usize> = (0..grid.ncells()).filter(|&c| grid.mask[c]).collect();
    let count = ((fraction * ocean.len() as f64).round() as usize).min(ocean.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ocean.len(), count)
        .into_iter()
        .map(|k| ocean[k])
        .collect();
    picked.sort_unstable();
    let mut out = Vec::with_capacity(4 * count);
    for cell in picked {
        let (lat, lon) = grid.cell_latlon(cell);
        for ch in Channel::ALL {
            out.push(Observation {
                lat,
                lon,
                time: truth.timestamp,
                channel: ch,
                value: truth.get(ch, cell),
            });
        }
    }
    Ok(out)
}

pub const OBS_CSV_HEADER: &str = "lat,lon,time,channel,value";

pub fn parse_observations_csv(text: &str) -> Result<Vec<Observation>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| AssimError::Csv("empty file".into()))?;
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_ascii_lowercase()).collect();
    if cols != ["lat", "lon", "time", "channel", "value"] {
        return Err(AssimError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(AssimError::Csv(format!("line {lineno}: expected 5 fields")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| AssimError::Csv(format!("line {lineno}: {e}")));
        out.push(Observation {
            lat: num(f[0])?,
            lon: num(f[1])?,
            time: f[2]
                .parse()
                .map_err(|e| AssimError::Csv(format!("line {lineno}: {e}")))?,
            channel: f[3].parse().map_err(|_| AssimError::UnknownChannel(f[3].to_string()))?,
            value: num(f[4])?,
        });
    }
    Ok(out)
}

pub fn observations_to_csv(obs: &[Observation]) -> String {
    let mut s = String::from(OBS_CSV_HEADER);
    s.push('\n');
    for o in obs {
        s.push_str(&format!("{},{},{},{},{}\n", o.lat, o.lon, o.time, o.channel, o.value));
    }
    s
}

pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    parse_observations_csv(&std::fs::read_to_string(path)?)
}
