//! Great-circle distances on a spherical Earth.

use serde::{Deserialize, Serialize};

use crate::scalar::{c, Scalar};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: Scalar> LatLon<T> {
    pub fn new(lat: T, lon: T) -> Self {
        LatLon { lat, lon }
    }
}

/// Haversine distance in kilometers.
pub fn haversine_km<T: Scalar>(a: LatLon<T>, b: LatLon<T>) -> T {
    let half = c::<T>(0.5);
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat * half).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon * half).sin().powi(2);
    // rounding can push h a hair past 1 for antipodal points
    let h = h.min(T::one()).max(T::zero());
    c::<T>(2.0 * EARTH_RADIUS_KM) * h.sqrt().asin()
}

/// Maximum pairwise great-circle distance over a point set (the hull diameter).
/// Zero for fewer than two points.
pub fn max_pairwise_km<T: Scalar>(points: &[LatLon<T>]) -> T {
    let mut best = T::zero();
    for (i, &p) in points.iter().enumerate() {
        for &q in &points[i + 1..] {
            best = best.max(haversine_km(p, q));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms() {
        let o = LatLon::new(0.0, 0.0);
        assert_eq!(haversine_km(o, o), 0.0);
        assert_abs_diff_eq!(haversine_km(o, LatLon::new(0.0, 180.0)), PI * 6371.0, epsilon = 1e-9);
        assert_abs_diff_eq!(haversine_km(o, LatLon::new(0.0, 180.0)), 20015.09, epsilon = 0.01);
        assert_abs_diff_eq!(
            haversine_km(o, LatLon::new(0.0, 1.0)),
            2.0 * PI * 6371.0 / 360.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(haversine_km(o, LatLon::new(0.0, 1.0)), 111.195, epsilon = 0.001);
    }

    #[test]
    fn single_precision_agrees() {
        let d32 = haversine_km(LatLon::new(-27.4f32, -58.9), LatLon::new(-34.6, -58.4));
        let d64 = haversine_km(LatLon::new(-27.4f64, -58.9), LatLon::new(-34.6, -58.4));
        assert!((d32 as f64 - d64).abs() < 0.05, "{d32} vs {d64}");
    }

    #[test]
    fn diameter_degenerate_sets() {
        assert_eq!(max_pairwise_km::<f64>(&[]), 0.0);
        assert_eq!(max_pairwise_km(&[LatLon::new(10.0, 20.0)]), 0.0);
    }

    fn point() -> impl Strategy<Value = LatLon<f64>> {
        (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(lat, lon)| LatLon::new(lat, lon))
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(a in point(), b in point()) {
            let ab = haversine_km(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, haversine_km(b, a));
        }

        #[test]
        fn triangle_inequality(a in point(), b in point(), m in point()) {
            let direct = haversine_km(a, b);
            let via = haversine_km(a, m) + haversine_km(m, b);
            prop_assert!(direct <= via * (1.0 + 1e-9) + 1e-9);
        }
    }
}
