//! Spherical-earth helpers.

/// Mean earth radius in nautical miles (6371.0088 km / 1.852).
pub const EARTH_RADIUS_NM: f64 = 6371.0088 / 1.852;

/// Great-circle distance in nautical miles between two lat/lon points given
/// in degrees.
pub fn haversine_nm(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_NM * a.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from point 1 to point 2, degrees clockwise
/// from north in `[0, 360)`.
pub fn initial_bearing_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    wrap_deg(y.atan2(x).to_degrees())
}

/// Map an angle in degrees into `[0, 360)`.
pub fn wrap_deg(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Smallest absolute difference between two bearings, degrees in `[0, 180]`.
pub fn angle_between_deg(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}
