//! Bundled ship and port presets.

use serde::{Deserialize, Serialize};

use super::Ship;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

pub fn ships() -> Vec<Ship> {
    vec![
        Ship {
            name: "feeder-24kn".into(),
            v_design: 24.0,
            p_installed: 20_000.0,
            sfoc: 180.0,
            length: 150.0,
            displacement: 10_000.0,
            roll_period: 14.0,
            load_factor: 0.8,
            v_min: 8.0,
        },
        Ship {
            name: "ropax-20kn".into(),
            v_design: 20.0,
            p_installed: 16_000.0,
            sfoc: 190.0,
            length: 190.0,
            displacement: 12_000.0,
            roll_period: 16.0,
            load_factor: 0.75,
            v_min: 7.0,
        },
        Ship {
            name: "bulk-14kn".into(),
            v_design: 14.0,
            p_installed: 9_000.0,
            sfoc: 195.0,
            length: 180.0,
            displacement: 40_000.0,
            roll_period: 18.0,
            load_factor: 0.85,
            v_min: 5.0,
        },
    ]
}

pub fn ship(name: &str) -> Option<Ship> {
    ships().into_iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

pub fn default_ship() -> Ship {
    ships().remove(0)
}

pub fn ports() -> Vec<Port> {
    [
        ("Tokyo", 35.62, 139.78),
        ("Yokohama", 35.45, 139.65),
        ("Hakodate", 41.77, 140.72),
        ("Sendai", 38.27, 141.03),
        ("Hachinohe", 40.53, 141.53),
        ("Kushiro", 42.98, 144.37),
        ("Tomakomai", 42.63, 141.62),
        ("Onahama", 36.94, 140.90),
    ]
    .into_iter()
    .map(|(name, lat, lon)| Port {
        name: name.into(),
        lat,
        lon,
    })
    .collect()
}

pub fn port(name: &str) -> Option<Port> {
    ports().into_iter().find(|p| p.name.eq_ignore_ascii_case(name))
}
