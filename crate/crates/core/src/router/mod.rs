//! Navigation mesh, wave-dependent speed loss and time-dependent A* routing.

mod constraint;
mod mesh;
pub mod presets;
mod route;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::angle_between_deg;

pub use constraint::{rasterize_constraints, ConstraintField, Polygon};
pub use mesh::{build_mesh, Edge, NavMesh};
pub use route::{Leg, Route, RouteKind};
pub use search::{evaluate_path, min_distance_route, optimize_route, optimize_route_with, snap_to_ocean, RouteQuery, SNAP_RADIUS_CELLS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("grid has no ocean cells")]
    NoOcean,
    #[error("connectivity must be 8 or 16, got {0}")]
    BadConnectivity(u8),
    #[error("origin on land")]
    OriginOnLand,
    #[error("destination on land")]
    DestinationOnLand,
    #[error("{which} ({lat}, {lon}) outside the grid")]
    OutsideGrid { which: &'static str, lat: f64, lon: f64 },
    #[error("unreachable")]
    Unreachable,
    #[error("departure {departure} outside forecast window [{t0}, {t_last}]")]
    DepartureOutsideWindow { departure: f64, t0: i64, t_last: i64 },
    #[error("degenerate polygon: {0} vertices (need >= 3)")]
    DegeneratePolygon(usize),
    #[error("invalid ship: {0}")]
    InvalidShip(String),
    #[error("mesh and fields are on different grids")]
    GridMismatch,
}

pub type Result<T> = std::result::Result<T, RouteError>;

/// Vessel parameters used by the speed, power and safety models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ship {
    pub name: String,
    /// Design (calm-water) speed, knots.
    pub v_design: f64,
    /// Installed engine power, kW.
    pub p_installed: f64,
    /// Specific fuel oil consumption, g/kWh.
    pub sfoc: f64,
    /// Length, m.
    pub length: f64,
    /// Displacement, metric tons.
    pub displacement: f64,
    /// Natural roll period, s.
    pub roll_period: f64,
    /// Engine load at design speed, in (0, 1].
    pub load_factor: f64,
    /// Floor on effective speed, knots.
    pub v_min: f64,
}

impl Ship {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_design", self.v_design),
            ("p_installed", self.p_installed),
            ("sfoc", self.sfoc),
            ("length", self.length),
            ("displacement", self.displacement),
            ("roll_period", self.roll_period),
            ("load_factor", self.load_factor),
            ("v_min", self.v_min),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RouteError::InvalidShip(format!("{name} must be finite and > 0")));
            }
        }
        if self.load_factor > 1.0 {
            return Err(RouteError::InvalidShip("load_factor must be <= 1".into()));
        }
        if self.v_min >= self.v_design {
            return Err(RouteError::InvalidShip("v_min must be below v_design".into()));
        }
        Ok(())
    }
}

/// Sea state sampled at one place and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSample {
    /// Significant wave height, m.
    pub height: f64,
    /// Mean direction the waves come from, degrees clockwise from north.
    pub direction_deg: f64,
    /// Peak period, s.
    pub period: f64,
}

impl WaveSample {
    pub const CALM: WaveSample = WaveSample {
        height: 0.0,
        direction_deg: 0.0,
        period: 10.0,
    };
}

/// Angle between the ship's heading and the direction the waves come
/// from, in [0, 180] degrees; 0 is a head sea, 180 a following sea.
pub fn encounter_angle_deg(heading_deg: f64, wave_from_deg: f64) -> f64 {
    angle_between_deg(heading_deg, wave_from_deg)
}

/// Interchangeable wave-induced speed-loss model.
pub trait SpeedModel: Send + Sync {
    /// Achievable speed through water, knots, within `[v_min, v_design]`.
    fn effective_speed(&self, ship: &Ship, wave: &WaveSample, heading_deg: f64) -> f64;
}

/// Linear height/encounter-angle reduction scaled by a displacement factor.
#[derive(Debug, Clone, Copy, Default)]
pub struct WaveHeightSpeedLoss;

impl WaveHeightSpeedLoss {
    pub const HEIGHT_COEF: f64 = 0.745;
    pub const ANGLE_COEF: f64 = 0.257;
    pub const DISPLACEMENT_COEF: f64 = 1.35e-6;
}

impl SpeedModel for WaveHeightSpeedLoss {
    fn effective_speed(&self, ship: &Ship, wave: &WaveSample, heading_deg: f64) -> f64 {
        effective_speed(ship, wave, heading_deg)
    }
}

/// Speed after wave-induced loss:
/// `dv = max(0, 0.745 H - 0.257 q H) * clamp(1 - 1.35e-6 disp v_design, 0.1, 1)`
/// with `q` the encounter angle in radians, floored at `v_min`.
pub fn effective_speed(ship: &Ship, wave: &WaveSample, heading_deg: f64) -> f64 {
    let h = wave.height.max(0.0);
    if h == 0.0 {
        return ship.v_design;
    }
    let q = encounter_angle_deg(heading_deg, wave.direction_deg).to_radians();
    let raw = (WaveHeightSpeedLoss::HEIGHT_COEF * h - WaveHeightSpeedLoss::ANGLE_COEF * q * h).max(0.0);
    let disp = (1.0 - WaveHeightSpeedLoss::DISPLACEMENT_COEF * ship.displacement * ship.v_design).clamp(0.1, 1.0);
    (ship.v_design - raw * disp).clamp(ship.v_min, ship.v_design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn ship() -> Ship {
        Ship {
            name: "test".into(),
            v_design: 24.0,
            p_installed: 10_000.0,
            sfoc: 180.0,
            length: 100.0,
            displacement: 10_000.0,
            roll_period: 20.0,
            load_factor: 0.8,
            v_min: 6.0,
        }
    }

    fn wave(h: f64, dir: f64) -> WaveSample {
        WaveSample {
            height: h,
            direction_deg: dir,
            period: 9.0,
        }
    }

    #[test]
    fn calm_sea_gives_design_speed() {
        assert_eq!(effective_speed(&ship(), &wave(0.0, 33.0), 120.0), 24.0);
    }

    #[test]
    fn head_sea_example() {
        // heading north into waves from the north
        let v = effective_speed(&ship(), &wave(3.0, 0.0), 0.0);
        assert!((v - (24.0 - 2.235 * (1.0 - 0.324))).abs() < 1e-9, "{v}");
        assert!((v - 22.489).abs() < 1e-3);
    }

    #[test]
    fn following_sea_has_no_loss() {
        assert_eq!(effective_speed(&ship(), &wave(5.0, 180.0), 0.0), 24.0);
    }

    #[test]
    fn floor_applies() {
        let s = Ship {
            displacement: 1.0,
            ..ship()
        };
        assert_eq!(effective_speed(&s, &wave(40.0, 10.0), 10.0), s.v_min);
    }

    #[test]
    fn ship_validation() {
        assert!(ship().validate().is_ok());
        assert!(Ship { v_min: 30.0, ..ship() }.validate().is_err());
        assert!(Ship { sfoc: -1.0, ..ship() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn speed_within_bounds(h in 0.0f64..20.0, dir in 0.0f64..360.0, hd in 0.0f64..360.0, disp in 1.0f64..2e5) {
            let s = Ship { displacement: disp, ..ship() };
            let v = effective_speed(&s, &wave(h, dir), hd);
            prop_assert!(v >= s.v_min && v <= s.v_design);
        }

        #[test]
        fn speed_non_increasing_in_height(h in 0.0f64..10.0, dh in 0.0f64..5.0, dir in 0.0f64..360.0, hd in 0.0f64..360.0) {
            let s = ship();
            prop_assert!(effective_speed(&s, &wave(h + dh, dir), hd) <= effective_speed(&s, &wave(h, dir), hd) + 1e-12);
        }
    }
}
