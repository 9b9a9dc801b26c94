//! Sea-state surrogate forecasting and ship weather routing.
//!
//! The crate is organised bottom-up:
//!
//! - [`gridio`]: lat/lon grids, wave frames, the `.wgrid` file format, a
//!   synthetic wave-dynamics generator and regridding.
//! - [`forecast`]: the spectral tendency operator, predictor-corrector time
//!   stepping, autoregressive rollout, loss and training.
//! - [`assimilate`]: Gaussian kernel-density correction toward sparse
//!   observations.
//! - [`router`]: navigation mesh, wave-dependent speed loss and time-dependent
//!   A* search.
//! - [`analytics`]: engine power, fuel, emissions and safety flags per leg.
//! - [`metrics`]: forecast skill scores and spectral diagnostics.

pub mod analytics;
pub mod assimilate;
pub mod fft;
pub mod forecast;
pub mod geo;
pub mod gridio;
pub mod metrics;
pub mod router;

pub use gridio::{Channel, FieldStack, GeoGrid, WaveFrame};
