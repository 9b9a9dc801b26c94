//! Grid and wave-field data model.
//!
//! Planes are stored row-major as `[lat][lon]`, with row 0 at `lat_min`.
//! Grid nodes sit at `lat_min + i * dlat` and `lon_min + j * dlon`; both
//! bounding values are nodes.

mod csv_import;
mod format;
mod regrid;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_import::import_csv;
pub use format::{read_field_stack, write_field_stack, FORMAT_VERSION, MAGIC};
pub use regrid::regrid;
pub use synth::{gen_synthetic, SynthParams};

/// Number of wave channels per frame.
pub const NCHAN: usize = 4;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("version mismatch: file has {0}, expected {FORMAT_VERSION}")]
    VersionMismatch(u16),
    #[error("truncated payload")]
    TruncatedPayload,
    #[error("NaN in ocean cell (time {time}, channel {channel}, cell {cell})")]
    NanInOcean {
        time: usize,
        channel: usize,
        cell: usize,
    },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("degenerate direction")]
    DegenerateDirection,
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, GridError>;

/// One of the four wave state channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Channel {
    /// Significant wave height, m.
    Vhm0,
    /// Mean wave direction, east component of the unit vector.
    Vmdrx,
    /// Mean wave direction, north component of the unit vector.
    Vmdry,
    /// Peak wave period, s.
    Vtpk,
}

impl Channel {
    pub const ALL: [Channel; NCHAN] = [Channel::Vhm0, Channel::Vmdrx, Channel::Vmdry, Channel::Vtpk];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Vhm0 => "VHM0",
            Channel::Vmdrx => "VMDRX",
            Channel::Vmdry => "VMDRY",
            Channel::Vtpk => "VTPK",
        }
    }

    pub fn from_index(i: usize) -> Option<Channel> {
        Self::ALL.get(i).copied()
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VHM0" => Ok(Channel::Vhm0),
            "VMDRX" => Ok(Channel::Vmdrx),
            "VMDRY" => Ok(Channel::Vmdry),
            "VTPK" => Ok(Channel::Vtpk),
            other => Err(format!("unknown channel id {other:?}")),
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regular lat/lon grid with an ocean mask (`true` = ocean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub nlat: usize,
    pub nlon: usize,
    pub mask: Vec<bool>,
}

impl GeoGrid {
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        nlat: usize,
        nlon: usize,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let grid = Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            nlat,
            nlon,
            mask,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// All-ocean grid.
    pub fn ocean(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64, nlat: usize, nlon: usize) -> Result<Self> {
        Self::new(lat_min, lat_max, lon_min, lon_max, nlat, nlon, vec![true; nlat * nlon])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_min < self.lat_max) || !(self.lon_min < self.lon_max) {
            return Err(GridError::Invariant("bounding box must satisfy min < max".into()));
        }
        if ![self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(GridError::Invariant("bounding box must be finite".into()));
        }
        if self.nlat < 2 || self.nlon < 2 {
            return Err(GridError::Invariant("grid needs at least 2x2 nodes".into()));
        }
        if self.mask.len() != self.nlat * self.nlon {
            return Err(GridError::Invariant(format!(
                "mask has {} cells, grid has {}",
                self.mask.len(),
                self.nlat * self.nlon
            )));
        }
        Ok(())
    }

    pub fn ncells(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn n_ocean(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn dlat(&self) -> f64 {
        (self.lat_max - self.lat_min) / (self.nlat - 1) as f64
    }

    pub fn dlon(&self) -> f64 {
        (self.lon_max - self.lon_min) / (self.nlon - 1) as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nlon + j
    }

    #[inline]
    pub fn ij(&self, cell: usize) -> (usize, usize) {
        (cell / self.nlon, cell % self.nlon)
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat_min + i as f64 * self.dlat()
    }

    pub fn lon(&self, j: usize) -> f64 {
        self.lon_min + j as f64 * self.dlon()
    }

    pub fn cell_latlon(&self, cell: usize) -> (f64, f64) {
        let (i, j) = self.ij(cell);
        (self.lat(i), self.lon(j))
    }

    pub fn is_ocean(&self, cell: usize) -> bool {
        self.mask[cell]
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }

    /// Nearest grid node to a position; `None` outside the bounding box.
    pub fn snap(&self, lat: f64, lon: f64) -> Option<usize> {
        if !self.contains(lat, lon) {
            return None;
        }
        let i = ((lat - self.lat_min) / self.dlat()).round() as usize;
        let j = ((lon - self.lon_min) / self.dlon()).round() as usize;
        Some(self.idx(i.min(self.nlat - 1), j.min(self.nlon - 1)))
    }

    /// Fractional (row, column) index of a position.
    pub fn frac_index(&self, lat: f64, lon: f64) -> (f64, f64) {
        ((lat - self.lat_min) / self.dlat(), (lon - self.lon_min) / self.dlon())
    }
}

/// One time slice of the four-channel wave state.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFrame {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    /// `[chan][lat][lon]` row-major values.
    pub data: Vec<f64>,
}

impl WaveFrame {
    pub fn zeros(timestamp: i64, ncells: usize) -> Self {
        Self {
            timestamp,
            data: vec![0.0; NCHAN * ncells],
        }
    }

    pub fn ncells(&self) -> usize {
        self.data.len() / NCHAN
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        let n = self.ncells();
        &self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut [f64] {
        let n = self.ncells();
        &mut self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.ncells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.ncells();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: Channel, cell: usize) -> f64 {
        self.data[c.index() * self.ncells() + cell]
    }

    #[inline]
    pub fn set(&mut self, c: Channel, cell: usize, v: f64) {
        let n = self.ncells();
        self.data[c.index() * n + cell] = v;
    }

    /// Mean wave direction (degrees, coming-from) at a cell.
    pub fn direction_deg(&self, cell: usize) -> Result<f64> {
        decode_direction(self.get(Channel::Vmdrx, cell), self.get(Channel::Vmdry, cell))
    }

    /// Zero every channel on land cells.
    pub fn apply_land_sentinel(&mut self, mask: &[bool]) {
        let n = self.ncells();
        for c in 0..NCHAN {
            for (v, &ocean) in self.data[c * n..(c + 1) * n].iter_mut().zip(mask) {
                if !ocean {
                    *v = 0.0;
                }
            }
        }
    }

    /// Rescale the direction components to unit length on ocean cells.
    /// Cells where both components vanish, or whose norm is already within
    /// [`UNIT_NORM_TOL`] of one, are left untouched.
    pub fn renormalize_directions(&mut self, mask: &[bool]) {
        let n = self.ncells();
        let (xs, rest) = self.data[n..].split_at_mut(n);
        let ys = &mut rest[..n];
        for cell in 0..n {
            if !mask[cell] {
                continue;
            }
            let norm = xs[cell].hypot(ys[cell]);
            if norm > 0.0 && norm.is_finite() && (norm - 1.0).abs() > UNIT_NORM_TOL {
                xs[cell] /= norm;
                ys[cell] /= norm;
            }
        }
    }

    /// Round every value through `f32`, the on-disk precision.
    pub fn quantize(&mut self) {
        for v in self.data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Direction vectors this close to unit length count as normalised; covers
/// the rounding left by `f32` storage.
pub const UNIT_NORM_TOL: f64 = 4e-7;

/// Minimum period kept on ocean cells after physical projection, s.
pub const MIN_PERIOD_S: f64 = 0.1;

/// Project a frame back onto the physical state space: non-negative wave
/// height, positive period, unit direction vectors, zero land.
pub fn project_physical(frame: &mut WaveFrame, mask: &[bool]) {
    frame.renormalize_directions(mask);
    let n = frame.ncells();
    for cell in 0..n {
        if !mask[cell] {
            continue;
        }
        let h = &mut frame.data[cell];
        if *h < 0.0 {
            *h = 0.0;
        }
        let t = &mut frame.data[3 * n + cell];
        if *t < MIN_PERIOD_S {
            *t = MIN_PERIOD_S;
        }
    }
    frame.apply_land_sentinel(mask);
}

/// A uniformly spaced time sequence of frames on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack {
    pub grid: GeoGrid,
    pub frames: Vec<WaveFrame>,
    pub step_seconds: u32,
}

impl FieldStack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn t0(&self) -> i64 {
        self.frames.first().map(|f| f.timestamp).unwrap_or(0)
    }

    pub fn t_last(&self) -> i64 {
        self.frames.last().map(|f| f.timestamp).unwrap_or(0)
    }

    /// Index of the frame nearest in time to `t` (epoch seconds), clamped
    /// to the stack.
    pub fn nearest_frame(&self, t: f64) -> usize {
        let rel = (t - self.t0() as f64) / self.step_seconds as f64;
        let k = (rel + 0.5).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.frames.len() - 1)
        }
    }

    /// Check every stack invariant: grid shape, uniform timestamps, finite
    /// values, physical ranges on ocean and the land sentinel.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.step_seconds == 0 {
            return Err(GridError::Invariant("step_seconds must be positive".into()));
        }
        if self.frames.is_empty() {
            return Err(GridError::Invariant("stack has no frames".into()));
        }
        let n = self.grid.ncells();
        let t0 = self.t0();
        for (k, f) in self.frames.iter().enumerate() {
            if f.data.len() != NCHAN * n {
                return Err(GridError::Invariant(format!("frame {k} has wrong size")));
            }
            if f.timestamp != t0 + k as i64 * self.step_seconds as i64 {
                return Err(GridError::Invariant(format!(
                    "frame {k} timestamp {} breaks uniform spacing",
                    f.timestamp
                )));
            }
            validate_frame(f, &self.grid.mask).map_err(|e| match e {
                GridError::Invariant(m) => GridError::Invariant(format!("frame {k}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }
}

/// Physical-range and sentinel checks for one frame.
pub fn validate_frame(f: &WaveFrame, mask: &[bool]) -> Result<()> {
    let n = mask.len();
    for cell in 0..n {
        let vals = [f.data[cell], f.data[n + cell], f.data[2 * n + cell], f.data[3 * n + cell]];
        if mask[cell] {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(GridError::Invariant(format!("non-finite value at cell {cell}")));
            }
            if vals[0] < 0.0 {
                return Err(GridError::Invariant(format!("negative VHM0 at cell {cell}")));
            }
            if vals[3] <= 0.0 {
                return Err(GridError::Invariant(format!("non-positive VTPK at cell {cell}")));
            }
            let norm2 = vals[1] * vals[1] + vals[2] * vals[2];
            if (norm2 - 1.0).abs() > 1e-6 {
                return Err(GridError::Invariant(format!(
                    "direction not unit length at cell {cell} (|v|^2 = {norm2})"
                )));
            }
        } else if vals.iter().any(|&v| v != 0.0) {
            return Err(GridError::Invariant(format!("land cell {cell} is not zero")));
        }
    }
    Ok(())
}

/// Unit-vector encoding of a direction in degrees clockwise from north:
/// `(sin θ, cos θ)`.
pub fn encode_direction(theta_deg: f64) -> (f64, f64) {
    let r = theta_deg.to_radians();
    (r.sin(), r.cos())
}

/// Inverse of [`encode_direction`], in `[0, 360)`.
pub fn decode_direction(x: f64, y: f64) -> Result<f64> {
    if x == 0.0 && y == 0.0 {
        return Err(GridError::DegenerateDirection);
    }
    Ok(crate::geo::wrap_deg(x.atan2(y).to_degrees()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_cardinals() {
        let (x, y) = encode_direction(0.0);
        assert!(x.abs() < 1e-15 && (y - 1.0).abs() < 1e-15);
        let (x, y) = encode_direction(90.0);
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-15);
    }

    #[test]
    fn decode_round_trip_137_5() {
        let (x, y) = encode_direction(137.5);
        assert!((decode_direction(x, y).unwrap() - 137.5).abs() < 1e-9);
    }

    #[test]
    fn decode_zero_vector_is_degenerate() {
        assert!(matches!(decode_direction(0.0, 0.0), Err(GridError::DegenerateDirection)));
    }

    proptest! {
        #[test]
        fn direction_round_trip(theta in 0.0f64..360.0) {
            let (x, y) = encode_direction(theta);
            prop_assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-12);
            let back = decode_direction(x, y).unwrap();
            let err = crate::geo::angle_between_deg(back, theta);
            prop_assert!(err < 1e-9, "theta {} back {}", theta, back);
        }
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(GeoGrid::ocean(0.0, 1.0, 0.0, 1.0, 1, 4).is_err());
        assert!(GeoGrid::ocean(1.0, 0.0, 0.0, 1.0, 2, 2).is_err());
        assert!(GeoGrid::new(0.0, 1.0, 0.0, 1.0, 2, 2, vec![true; 3]).is_err());
    }

    #[test]
    fn snapping_and_coordinates() {
        let g = GeoGrid::ocean(30.0, 40.0, 130.0, 150.0, 11, 21).unwrap();
        assert_eq!(g.dlat(), 1.0);
        assert_eq!(g.snap(33.4, 141.6), Some(g.idx(3, 12)));
        assert_eq!(g.snap(29.0, 141.0), None);
        assert_eq!(g.cell_latlon(g.idx(10, 20)), (40.0, 150.0));
    }

    #[test]
    fn renormalize_only_touches_ocean() {
        let mut f = WaveFrame::zeros(0, 2);
        f.data = vec![1.0, 1.0, 3.0, 3.0, 4.0, 4.0, 8.0, 8.0];
        f.renormalize_directions(&[true, false]);
        assert!((f.data[2] - 0.6).abs() < 1e-15 && (f.data[4] - 0.8).abs() < 1e-15);
        assert_eq!((f.data[3], f.data[5]), (3.0, 4.0));
    }

    #[test]
    fn nearest_frame_rounds_and_clamps() {
        let grid = GeoGrid::ocean(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let frames = (0..3).map(|k| WaveFrame::zeros(100 + 10 * k, 4)).collect();
        let s = FieldStack { grid, frames, step_seconds: 10 };
        assert_eq!(s.nearest_frame(50.0), 0);
        assert_eq!(s.nearest_frame(104.9), 0);
        assert_eq!(s.nearest_frame(105.0), 1);
        assert_eq!(s.nearest_frame(1e9), 2);
    }
}
