use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean earth radius used by the haversine distance.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: Scalar> GeoPoint<T> {
    pub fn new(lat: T, lon: T) -> Result<Self> {
        let ok = lat.is_finite()
            && lon.is_finite()
            && lat.abs() <= T::lit(90.0)
            && lon.abs() <= T::lit(180.0);
        if !ok {
            return Err(Error::InvalidGeoPoint {
                lat: lat.to_f64_lossy(),
                lon: lon.to_f64_lossy(),
            });
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in kilometers on a sphere of radius 6371 km.
pub fn haversine_km<T: Scalar>(p: &GeoPoint<T>, q: &GeoPoint<T>) -> T {
    let phi_p = p.lat.to_radians();
    let phi_q = q.lat.to_radians();
    let dphi = (q.lat - p.lat).to_radians();
    let dlambda = (q.lon - p.lon).to_radians();
    let s1 = (dphi * T::half()).sin();
    let s2 = (dlambda * T::half()).sin();
    let h = s1 * s1 + phi_p.cos() * phi_q.cos() * s2 * s2;
    let h = h.max(T::zero()).min(T::one());
    T::two() * T::lit(EARTH_RADIUS_KM) * h.sqrt().asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_on_equator() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        let q = GeoPoint::new(0.0, 1.0).unwrap();
        let d = haversine_km(&p, &q);
        assert!((d - 6371.0 * std::f64::consts::PI / 180.0).abs() < 1e-9);
        assert!((d - 111.195).abs() < 1e-3);
    }

    #[test]
    fn same_point_is_zero() {
        let p = GeoPoint::new(40.7, -74.0).unwrap();
        assert_eq!(haversine_km(&p, &p), 0.0);
    }

    #[test]
    fn antipodes_are_half_circumference() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        let q = GeoPoint::new(0.0, 180.0).unwrap();
        assert!((haversine_km(&p, &q) - std::f64::consts::PI * 6371.0).abs() < 1e-9);
    }

    #[test]
    fn range_checked() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }
}
