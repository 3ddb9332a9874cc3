//! Planar projective map between geographic coordinates and image pixels.
//!
//! `H` maps world `(lat, lon, 1)` to image `(px, py, w)`; pixels are
//! brought back to the ground plane with `H⁻¹`. Latitude and longitude are
//! treated as planar coordinates, which is adequate at intersection scale.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::geo::{GeoPoint, EARTH_RADIUS_KM};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

type Mat3<T> = [[T; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T> {
    forward: Mat3<T>,
    inverse: Mat3<T>,
}

impl<T: Scalar> Homography<T> {
    /// From a row-major world-to-image matrix.
    pub fn from_row_major(h: [T; 9]) -> Result<Self> {
        Self::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]])
    }

    pub fn from_matrix(forward: Mat3<T>) -> Result<Self> {
        if forward.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography"));
        }
        let m = forward;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        // adjugate = transpose of the cofactor matrix
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
        // |det| never exceeds the product of the row norms; compare against
        // that so that rescaling a row does not change the verdict.
        let hadamard = m
            .iter()
            .map(|r| r.iter().map(|v| *v * *v).sum::<T>().sqrt())
            .fold(T::one(), |a, n| a * n);
        if !det.is_finite() || det.abs() <= T::epsilon() * T::lit(16.0) * hadamard {
            return Err(Error::SingularHomography(det.to_f64_lossy()));
        }
        let mut inverse = adj;
        for row in &mut inverse {
            for v in row.iter_mut() {
                *v = *v / det;
            }
        }
        Ok(Self { forward, inverse })
    }

    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        Self {
            forward: [[o, z, z], [z, o, z], [z, z, o]],
            inverse: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Axis-aligned calibration where `pixels_per_meter` pixels span one
    /// meter and pixel `(0, 0)` sits at `origin`. Image x runs along
    /// latitude, image y along longitude.
    pub fn scaled(pixels_per_meter: T, origin: GeoPoint<T>) -> Result<Self> {
        let meters_per_degree = T::lit(EARTH_RADIUS_KM * 1000.0) * T::PI() / T::lit(180.0);
        let s = pixels_per_meter * meters_per_degree;
        let z = T::zero();
        Self::from_matrix([
            [s, z, -s * origin.lat],
            [z, s, -s * origin.lon],
            [z, z, T::one()],
        ])
    }

    pub fn matrix(&self) -> &Mat3<T> {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &Mat3<T> {
        &self.inverse
    }

    /// Pixel to geographic point through `H⁻¹`.
    pub fn image_to_world(&self, px: T, py: T) -> Result<GeoPoint<T>> {
        let (a, b) = apply(&self.inverse, px, py).ok_or(Error::PointAtInfinity {
            x: px.to_f64_lossy(),
            y: py.to_f64_lossy(),
        })?;
        GeoPoint::new(a, b)
    }

    /// Geographic point to pixel through `H`.
    pub fn world_to_image(&self, p: &GeoPoint<T>) -> Result<(T, T)> {
        apply(&self.forward, p.lat, p.lon).ok_or(Error::PointAtInfinity {
            x: p.lat.to_f64_lossy(),
            y: p.lon.to_f64_lossy(),
        })
    }

    pub fn to_f64(&self) -> Homography<f64> {
        let c = |m: &Mat3<T>| m.map(|r| r.map(|v| v.to_f64_lossy()));
        Homography {
            forward: c(&self.forward),
            inverse: c(&self.inverse),
        }
    }
}

fn apply<T: Scalar>(m: &Mat3<T>, x: T, y: T) -> Option<(T, T)> {
    let row = |r: &[T; 3]| r[0] * x + r[1] * y + r[2];
    let (a, b, w) = (row(&m[0]), row(&m[1]), row(&m[2]));
    let mag = (m[2][0] * x).abs() + (m[2][1] * y).abs() + m[2][2].abs();
    if !w.is_finite() || w.abs() <= T::epsilon() * T::lit(64.0) * mag {
        return None;
    }
    let out = (a / w, b / w);
    (out.0.is_finite() && out.1.is_finite()).then_some(out)
}

/// A pixel with its surveyed geographic location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationPoint {
    pub px: f64,
    pub py: f64,
    pub lat: f64,
    pub lon: f64,
}

/// Calibration file contents: a matrix or point correspondences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Calibration {
    Matrix {
        #[serde(rename = "H")]
        h: Vec<f64>,
    },
    Points {
        points: Vec<CalibrationPoint>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationFit<T> {
    pub homography: Homography<T>,
    /// RMS transfer error in normalized image coordinates; `None` for a supplied matrix.
    pub residual: Option<f64>,
}

/// Fit residuals above this are worth a warning.
pub const RESIDUAL_WARN: f64 = 1e-6;

impl Calibration {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| Error::Calibration(format!("unreadable calibration file: {e}")))
    }

    pub fn resolve<T: Scalar>(&self) -> Result<CalibrationFit<T>> {
        match self {
            Calibration::Matrix { h } => {
                let h: [f64; 9] = h.as_slice().try_into().map_err(|_| {
                    Error::Calibration(format!("\"H\" must hold 9 values, found {}", h.len()))
                })?;
                Ok(CalibrationFit {
                    homography: Homography::from_row_major(h.map(T::lit))?,
                    residual: None,
                })
            }
            Calibration::Points { points } => {
                let (h, residual) = fit_dlt(points)?;
                if residual > RESIDUAL_WARN {
                    log::warn!("homography fit residual {residual:e} exceeds {RESIDUAL_WARN:e}");
                }
                Ok(CalibrationFit {
                    homography: Homography::from_matrix(h.map(|r| r.map(T::lit)))?,
                    residual: Some(residual),
                })
            }
        }
    }
}

/// Translate to the centroid and scale to a mean distance of √2.
fn normalizer(pts: &[(f64, f64)]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean = pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Calibration(
            "calibration points are coincident".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform(m: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let v = m * Vector3::new(p.0, p.1, 1.0);
    (v.x / v.z, v.y / v.z)
}

/// Normalized direct linear transform, world → image.
fn fit_dlt(points: &[CalibrationPoint]) -> Result<([[f64; 3]; 3], f64)> {
    if points.len() < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 point pairs, found {}",
            points.len()
        )));
    }
    let world: Vec<_> = points.iter().map(|p| (p.lat, p.lon)).collect();
    let image: Vec<_> = points.iter().map(|p| (p.px, p.py)).collect();
    let tw = normalizer(&world)?;
    let ti = normalizer(&image)?;
    let wn: Vec<_> = world.iter().map(|&p| transform(&tw, p)).collect();
    let im: Vec<_> = image.iter().map(|&p| transform(&ti, p)).collect();

    let rows = (2 * points.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (&(x, y), &(u, v))) in wn.iter().zip(&im).enumerate() {
        let r0 = 2 * k;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Calibration("SVD failed".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine singular values");
    let h = v_t.row(idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let mut residual = 0.0;
    for (&w, &i) in wn.iter().zip(&im) {
        let p = transform(&hn, w);
        residual += (p.0 - i.0).powi(2) + (p.1 - i.1).powi(2);
    }
    let residual = (residual / points.len() as f64).sqrt();

    let ti_inv = ti
        .try_inverse()
        .ok_or_else(|| Error::Calibration("degenerate image normalization".into()))?;
    let mut full = ti_inv * hn * tw;
    let norm = if full[(2, 2)].abs() > 1e-12 {
        full[(2, 2)]
    } else {
        full.norm()
    };
    full /= norm;
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = full[(r, c)];
        }
    }
    if !residual.is_finite() {
        return Err(Error::Calibration("degenerate point configuration".into()));
    }
    Ok((out, residual))
}
