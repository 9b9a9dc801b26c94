use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteKind {
    MinimumDistance,
    Optimized,
    Rehearsal,
}

impl RouteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteKind::MinimumDistance => "minimum-distance",
            RouteKind::Optimized => "optimized",
            RouteKind::Rehearsal => "rehearsal",
        }
    }
}

/// One edge of a route, departing `from` and arriving at `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub node: usize,
    pub to: usize,
    pub lat: f64,
    pub lon: f64,
    pub to_lat: f64,
    pub to_lon: f64,
    /// Epoch seconds.
    pub departure_time: f64,
    pub arrival_time: f64,
    pub heading: f64,
    pub distance_nm: f64,
    pub v_eff_knots: f64,
    pub wave_height: f64,
    pub wave_direction: f64,
    pub wave_period: f64,
}

impl Leg {
    pub fn hours(&self) -> f64 {
        (self.arrival_time - self.departure_time) / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub kind: RouteKind,
    /// Requested `[lat, lon]` endpoints before snapping.
    pub origin: [f64; 2],
    pub destination: [f64; 2],
    pub origin_node: usize,
    pub destination_node: usize,
    pub departure: f64,
    pub legs: Vec<Leg>,
    pub total_hours: f64,
    pub total_nm: f64,
}

impl Route {
    /// Node sequence from origin to destination.
    pub fn nodes(&self) -> Vec<usize> {
        let mut out = vec![self.origin_node];
        out.extend(self.legs.iter().map(|l| l.to));
        out
    }

    pub fn arrival(&self) -> f64 {
        self.legs.last().map(|l| l.arrival_time).unwrap_or(self.departure)
    }

    /// Recompute totals from the legs.
    pub(crate) fn finish(&mut self) {
        self.total_nm = self.legs.iter().map(|l| l.distance_nm).sum();
        self.total_hours = (self.arrival() - self.departure) / 3600.0;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("route serialises")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// GeoJSON Feature with a LineString of `[lon, lat]` positions.
    pub fn to_geojson(&self) -> Value {
        let mut coords: Vec<[f64; 2]> = Vec::with_capacity(self.legs.len() + 1);
        match self.legs.first() {
            Some(first) => coords.push([first.lon, first.lat]),
            None => coords.push([self.origin[1], self.origin[0]]),
        }
        coords.extend(self.legs.iter().map(|l| [l.to_lon, l.to_lat]));
        json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": {
                "kind": self.kind.as_str(),
                "total_hours": self.total_hours,
                "total_nm": self.total_nm,
                "departure": self.departure,
            }
        })
    }
}
