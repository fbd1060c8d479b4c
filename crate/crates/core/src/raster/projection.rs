//! Spherical Lambert azimuthal equal-area projection.

use crate::error::{Error, Result};

/// Radius of the sphere with the same surface area as the WGS84 ellipsoid.
pub const AUTHALIC_RADIUS: f64 = 6_371_007.181;

const SINGULARITY_EPS: f64 = 1e-12;

/// Projection centred on (`lon0`, `lat0`), both in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertAzimuthal {
    lon0: f64,
    sin_lat0: f64,
    cos_lat0: f64,
}

impl LambertAzimuthal {
    pub fn new(lon0: f64, lat0: f64) -> Self {
        let (sin_lat0, cos_lat0) = lat0.to_radians().sin_cos();
        LambertAzimuthal {
            lon0,
            sin_lat0,
            cos_lat0,
        }
    }

    /// Degrees to projected metres.
    pub fn forward(&self, lon: f64, lat: f64) -> Result<(f64, f64)> {
        if !(lat.abs() <= 90.0) || !lon.is_finite() {
            return Err(Error::Invalid(format!("latitude {lat} / longitude {lon} out of range")));
        }
        let (sin_lat, cos_lat) = lat.to_radians().sin_cos();
        let (sin_dlon, cos_dlon) = (lon - self.lon0).to_radians().sin_cos();
        let denom = 1.0 + self.sin_lat0 * sin_lat + self.cos_lat0 * cos_lat * cos_dlon;
        if denom <= SINGULARITY_EPS {
            return Err(Error::ProjectionSingularity { lon, lat });
        }
        let k = (2.0 / denom).sqrt();
        let x = AUTHALIC_RADIUS * k * cos_lat * sin_dlon;
        let y = AUTHALIC_RADIUS * k * (self.cos_lat0 * sin_lat - self.sin_lat0 * cos_lat * cos_dlon);
        Ok((x, y))
    }

    /// Projected metres to degrees. Points beyond the antipode radius fail.
    pub fn inverse(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let rho = x.hypot(y);
        let lat0 = self.sin_lat0.atan2(self.cos_lat0).to_degrees();
        if rho < 1e-9 {
            return Ok((self.lon0, lat0));
        }
        let ratio = rho / (2.0 * AUTHALIC_RADIUS);
        if !(ratio <= 1.0) {
            return Err(Error::Invalid(format!(
                "({x}, {y}) lies outside the projected disk"
            )));
        }
        let c = 2.0 * ratio.asin();
        let (sin_c, cos_c) = c.sin_cos();
        let lat = (cos_c * self.sin_lat0 + y * sin_c * self.cos_lat0 / rho)
            .clamp(-1.0, 1.0)
            .asin();
        let dlon = (x * sin_c).atan2(rho * self.cos_lat0 * cos_c - y * self.sin_lat0 * sin_c);
        let lon = normalize_lon(self.lon0 + dlon.to_degrees());
        Ok((lon, lat.to_degrees()))
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if wrapped == -180.0 && lon > 0.0 {
        180.0
    } else {
        wrapped
    }
}

pub fn project_lambert_equal_area(lon: f64, lat: f64, lon0: f64, lat0: f64) -> Result<(f64, f64)> {
    LambertAzimuthal::new(lon0, lat0).forward(lon, lat)
}

pub fn unproject_lambert_equal_area(x: f64, y: f64, lon0: f64, lat0: f64) -> Result<(f64, f64)> {
    LambertAzimuthal::new(lon0, lat0).inverse(x, y)
}
