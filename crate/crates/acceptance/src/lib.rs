//! The standard synthetic benchmark: a 64x64 all-ocean grid, one seeded
//! training stack and ten seeded evaluation stacks.

use std::ops::Range;

use swr_core::forecast::TrainConfig;
use swr_core::gridio::{gen_synthetic, FieldStack, GeoGrid, SynthParams};
use swr_core::metrics::SpectralEnergy;

pub const TRAIN_SEED: u64 = 100;
pub const TRAIN_FRAMES: usize = 40;
pub const EVAL_SEEDS: Range<u64> = 0..10;
/// Lead, in steps, at which skill is compared.
pub const LEAD: usize = 10;
/// Rollout length for the spectral check.
pub const SPECTRAL_STEPS: usize = 20;
/// Cumulative share of non-mean energy that defines the occupied band.
pub const OCCUPIED_FRACTION: f64 = 0.9999;
pub const MAX_BIN_GROWTH: f64 = 10.0;

pub fn grid() -> GeoGrid {
    GeoGrid::ocean(30.0, 45.0, 135.0, 150.0, 64, 64).expect("valid benchmark grid")
}

pub fn stack(seed: u64, frames: usize) -> FieldStack {
    let params = SynthParams {
        seed,
        ..SynthParams::default()
    };
    gen_synthetic(&grid(), &params, frames).expect("benchmark stack")
}

pub fn train_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        width: 8,
        kmax: 12,
        step_size: 3e-3,
        batch: 4,
        ..TrainConfig::default()
    }
}

/// Smallest wavenumber `k` such that bins `1..=k` hold `fraction` of the
/// energy outside the mean; `kmax` when the table never gets there.
pub fn occupied_band(spectrum: &SpectralEnergy, fraction: f64) -> usize {
    let total: f64 = spectrum.bins.iter().sum::<f64>() + spectrum.beyond;
    let mut acc = 0.0;
    for (i, b) in spectrum.bins.iter().enumerate() {
        acc += b;
        if acc >= fraction * total {
            return i + 1;
        }
    }
    spectrum.kmax()
}
