//! Great-circle distance and a local planar projection.

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine distance in kilometres between two (lat, lon) pairs in degrees.
pub fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // clamp guards sqrt of 1+eps for antipodal points
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection around a reference point, in km.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    lat0: f64,
    lon0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn centered_on(points: &[(f64, f64)]) -> Self {
        let n = points.len().max(1) as f64;
        let lat0 = points.iter().map(|p| p.0).sum::<f64>() / n;
        let lon0 = points.iter().map(|p| p.1).sum::<f64>() / n;
        LocalProjection { lat0, lon0, cos_lat0: lat0.to_radians().cos() }
    }

    pub fn project(&self, p: (f64, f64)) -> (f64, f64) {
        let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        ((p.1 - self.lon0) * k * self.cos_lat0, (p.0 - self.lat0) * k)
    }

    pub fn unproject(&self, xy: (f64, f64)) -> (f64, f64) {
        let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        (xy.1 / k + self.lat0, xy.0 / (k * self.cos_lat0) + self.lon0)
    }
}
