//! Engine power, fuel, emissions and safety flags per route leg, and
//! route-level summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::router::{encounter_angle_deg, Leg, Route, Ship};

/// Standard gravity, m/s^2.
const G: f64 = 9.80665;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid window: start {start} must precede end {end}")]
    InvalidWindow { start: f64, end: f64 },
    #[error("analytics do not match the route ({legs} legs, {analytics} records)")]
    LengthMismatch { legs: usize, analytics: usize },
    #[error("emission factors must be finite and >= 0")]
    InvalidFactors,
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmissionFactors {
    /// kg CO2 per kg fuel.
    pub co2_per_fuel: f64,
    /// kg SOx per kg fuel.
    pub sox_per_fuel: f64,
    /// g NOx per kWh.
    pub nox_per_kwh: f64,
    /// g PM per kWh.
    pub pm_per_kwh: f64,
}

impl Default for EmissionFactors {
    fn default() -> Self {
        Self {
            co2_per_fuel: 3.114,
            sox_per_fuel: 0.02,
            nox_per_kwh: 14.0,
            pm_per_kwh: 0.4,
        }
    }
}

impl EmissionFactors {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.co2_per_fuel, self.sox_per_fuel, self.nox_per_kwh, self.pm_per_kwh]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(AnalyticsError::InvalidFactors)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SafetyFlags {
    pub surf_riding: bool,
    pub parametric_roll: bool,
}

impl SafetyFlags {
    pub fn any(&self) -> bool {
        self.surf_riding || self.parametric_roll
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegAnalytics {
    pub departure_time: f64,
    pub hours: f64,
    pub distance_nm: f64,
    pub power_kw: f64,
    pub energy_kwh: f64,
    pub fuel_kg: f64,
    pub co2_kg: f64,
    pub sox_kg: f64,
    pub nox_kg: f64,
    pub pm_kg: f64,
    pub surf_riding: bool,
    pub parametric_roll: bool,
}

/// How `safety_pct` weighs flagged legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyWeighting {
    #[default]
    Legs,
    Time,
}

/// Percentage reduction relative to a baseline; `None` where the baseline
/// total is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Reductions {
    pub fuel: Option<f64>,
    pub co2: Option<f64>,
    pub sox: Option<f64>,
    pub nox: Option<f64>,
    pub pm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RouteSummary {
    pub voyage_hours: f64,
    pub fuel_mt: f64,
    pub co2_mt: f64,
    pub sox_mt: f64,
    pub nox_mt: f64,
    pub pm_mt: f64,
    pub miles_nm: f64,
    pub safety_pct: f64,
    pub legs: usize,
    /// Set when a segment selection contained no legs.
    pub empty: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_pct: Option<Reductions>,
}

/// Cubic speed law scaled by a wave-induced increase factor, capped at
/// installed power: `min(P, load P (v/vd)^3 (1 + (vd - v)/vd))`.
pub fn leg_power(ship: &Ship, v_eff: f64) -> f64 {
    let r = v_eff / ship.v_design;
    let base = ship.load_factor * ship.p_installed * r.powi(3);
    let factor = 1.0 + (ship.v_design - v_eff) / ship.v_design;
    (base * factor).min(ship.p_installed)
}

/// Energy, fuel and emission masses for one leg; flags are left unset.
pub fn leg_emissions(power_kw: f64, hours: f64, ship: &Ship, factors: &EmissionFactors) -> LegAnalytics {
    let energy = power_kw * hours;
    let fuel = energy * ship.sfoc / 1000.0;
    LegAnalytics {
        hours,
        power_kw,
        energy_kwh: energy,
        fuel_kg: fuel,
        co2_kg: fuel * factors.co2_per_fuel,
        sox_kg: fuel * factors.sox_per_fuel,
        nox_kg: energy * factors.nox_per_kwh / 1000.0,
        pm_kg: energy * factors.pm_per_kwh / 1000.0,
        ..LegAnalytics::default()
    }
}

/// Surf-riding and parametric-roll checks for a leg.
///
/// `heading_deg` is the course, `wave_from_deg` the direction the waves come
/// from, `period_s` the wave period, `v_knots` the speed.
pub fn safety_flags(ship: &Ship, heading_deg: f64, v_knots: f64, wave_from_deg: f64, period_s: f64) -> SafetyFlags {
    let alpha = encounter_angle_deg(heading_deg, wave_from_deg);
    let surf_riding = alpha > 135.0 && {
        let c = (180.0 - alpha).to_radians().cos();
        v_knots > 1.8 * ship.length.sqrt() / c
    };
    let parametric_roll = period_s > 0.0 && {
        let wavelength = G * period_s * period_s / std::f64::consts::TAU;
        let denom = 3.0 * period_s + v_knots * alpha.to_radians().cos();
        let in_band = wavelength >= 0.6 * ship.length && wavelength <= 2.3 * ship.length;
        if denom == 0.0 || !in_band {
            false
        } else {
            let te = (3.0 * period_s * period_s / denom).abs();
            let tr = ship.roll_period;
            (te - tr).abs() <= 0.1 * tr || (te - 0.5 * tr).abs() <= 0.05 * tr
        }
    };
    SafetyFlags {
        surf_riding,
        parametric_roll,
    }
}

fn analyze_leg(leg: &Leg, ship: &Ship, factors: &EmissionFactors) -> LegAnalytics {
    let power = leg_power(ship, leg.v_eff_knots);
    let mut a = leg_emissions(power, leg.hours(), ship, factors);
    // flat water has no encounter to flag
    let flags = if leg.wave_height > 0.0 {
        safety_flags(ship, leg.heading, leg.v_eff_knots, leg.wave_direction, leg.wave_period)
    } else {
        SafetyFlags::default()
    };
    a.departure_time = leg.departure_time;
    a.distance_nm = leg.distance_nm;
    a.surf_riding = flags.surf_riding;
    a.parametric_roll = flags.parametric_roll;
    a
}

/// Per-leg analytics in route order.
pub fn analyze_route(route: &Route, ship: &Ship, factors: &EmissionFactors) -> Vec<LegAnalytics> {
    route.legs.iter().map(|l| analyze_leg(l, ship, factors)).collect()
}

fn summarize(legs: &[LegAnalytics], weighting: SafetyWeighting) -> RouteSummary {
    let sum = |f: fn(&LegAnalytics) -> f64| legs.iter().map(f).sum::<f64>();
    let hours = sum(|a| a.hours);
    let flagged = |a: &LegAnalytics| a.surf_riding || a.parametric_roll;
    let safety_pct = match weighting {
        _ if legs.is_empty() => 0.0,
        SafetyWeighting::Legs => 100.0 * legs.iter().filter(|a| flagged(a)).count() as f64 / legs.len() as f64,
        SafetyWeighting::Time if hours > 0.0 => {
            100.0 * legs.iter().filter(|a| flagged(a)).map(|a| a.hours).sum::<f64>() / hours
        }
        SafetyWeighting::Time => 0.0,
    };
    RouteSummary {
        voyage_hours: hours,
        fuel_mt: sum(|a| a.fuel_kg) / 1000.0,
        co2_mt: sum(|a| a.co2_kg) / 1000.0,
        sox_mt: sum(|a| a.sox_kg) / 1000.0,
        nox_mt: sum(|a| a.nox_kg) / 1000.0,
        pm_mt: sum(|a| a.pm_kg) / 1000.0,
        miles_nm: sum(|a| a.distance_nm),
        safety_pct,
        legs: legs.len(),
        empty: legs.is_empty(),
        baseline: None,
        reduction_pct: None,
    }
}

fn reduction(baseline: f64, this: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (baseline - this) / baseline)
}

impl RouteSummary {
    /// Attach per-quantity reductions relative to `baseline`.
    pub fn with_baseline(mut self, name: impl Into<String>, baseline: &RouteSummary) -> Self {
        self.baseline = Some(name.into());
        self.reduction_pct = Some(Reductions {
            fuel: reduction(baseline.fuel_mt, self.fuel_mt),
            co2: reduction(baseline.co2_mt, self.co2_mt),
            sox: reduction(baseline.sox_mt, self.sox_mt),
            nox: reduction(baseline.nox_mt, self.nox_mt),
            pm: reduction(baseline.pm_mt, self.pm_mt),
        });
        self
    }
}

/// Route totals with optional reductions against `baseline`.
pub fn route_summary(
    route: &Route,
    ship: &Ship,
    factors: &EmissionFactors,
    baseline: Option<(&str, &Route)>,
    weighting: SafetyWeighting,
) -> RouteSummary {
    let s = summarize(&analyze_route(route, ship, factors), weighting);
    match baseline {
        Some((name, b)) => {
            let bs = summarize(&analyze_route(b, ship, factors), weighting);
            s.with_baseline(name, &bs)
        }
        None => s,
    }
}

/// Totals over legs departing in `[t_start, t_end)`.
pub fn segment_filter(
    route: &Route,
    analytics: &[LegAnalytics],
    t_start: f64,
    t_end: f64,
    weighting: SafetyWeighting,
) -> Result<RouteSummary> {
    if !(t_start < t_end) {
        return Err(AnalyticsError::InvalidWindow {
            start: t_start,
            end: t_end,
        });
    }
    if analytics.len() != route.legs.len() {
        return Err(AnalyticsError::LengthMismatch {
            legs: route.legs.len(),
            analytics: analytics.len(),
        });
    }
    let picked: Vec<LegAnalytics> = analytics
        .iter()
        .filter(|a| a.departure_time >= t_start && a.departure_time < t_end)
        .copied()
        .collect();
    Ok(summarize(&picked, weighting))
}

/// Round half away from zero on the decimal representation.
pub fn round_half_away(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    // shortest round-trip decimal string, then round its digits
    let s = format!("{}", x.abs());
    let s = if s.contains('e') { format!("{:.30}", x.abs()) } else { s };
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().chain(std::iter::repeat(b'0')).take(decimals)).map(|b| b - b'0').collect();
    let next = frac.as_bytes().get(decimals).map(|b| b - b'0').unwrap_or(0);
    if next >= 5 {
        let mut k = digits.len();
        loop {
            if k == 0 {
                digits.insert(0, 1);
                break;
            }
            k -= 1;
            if digits[k] == 9 {
                digits[k] = 0;
            } else {
                digits[k] += 1;
                break;
            }
        }
    }
    let n_int = digits.len() - decimals;
    let mut out = String::new();
    let is_zero = digits.iter().all(|&d| d == 0);
    if x < 0.0 && !is_zero {
        out.push('-');
    }
    out.extend(digits[..n_int].iter().map(|d| (b'0' + d) as char));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[n_int..].iter().map(|d| (b'0' + d) as char));
    }
    out
}

pub const TABLE_COLUMNS: [&str; 8] = [
    "Voyage Hours",
    "Fuel (mT)",
    "CO2 (mT)",
    "SOx (mT)",
    "NOx (mT)",
    "PM (mT)",
    "Miles",
    "Safety (%)",
];

/// Comparison table with two decimals per cell, one row per labelled summary.
pub fn emit_table(rows: &[(String, RouteSummary)]) -> String {
    let mut out = String::from("| Route | ");
    out.push_str(&TABLE_COLUMNS.join(" | "));
    out.push_str(" |\n|---|");
    out.push_str(&"---|".repeat(TABLE_COLUMNS.len()));
    out.push('\n');
    for (label, s) in rows {
        let cells = [
            s.voyage_hours,
            s.fuel_mt,
            s.co2_mt,
            s.sox_mt,
            s.nox_mt,
            s.pm_mt,
            s.miles_nm,
            s.safety_pct,
        ];
        out.push_str(&format!("| {label} |"));
        for c in cells {
            out.push_str(&format!(" {} |", round_half_away(c, 2)));
        }
        out.push('\n');
    }
    out
}
