//! Constant-velocity Kalman filter over `[x, y, s, r, vx, vy, vs]`.
//!
//! `x, y` is the box center, `s = w * h` the box area and `r = w / h` the
//! aspect ratio. The aspect ratio has no velocity term. Measurements are
//! `[x, y, s, r]` taken directly from a detected box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BoundingBox;
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 7;
pub const MEAS_DIM: usize = 4;

type Mat7<T> = [[T; STATE_DIM]; STATE_DIM];

/// Lower bound applied to `s` and `r` so a reconstructed box stays valid.
pub fn min_positive<T: Scalar>() -> T {
    T::lit(1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanNoise<T> {
    /// Variances of the `(x, y, s, r)` measurement.
    pub measurement: [T; MEAS_DIM],
    /// Process variance on the observed components.
    pub process_observed: T,
    /// Process variances on `(vx, vy, vs)`.
    pub process_velocity: [T; 3],
    /// Initial variance of the unobserved velocities.
    pub initial_velocity: T,
}

impl<T: Scalar> Default for KalmanNoise<T> {
    fn default() -> Self {
        Self {
            measurement: [T::lit(1.0), T::lit(1.0), T::lit(10.0), T::lit(0.01)],
            process_observed: T::lit(1e-4),
            process_velocity: [T::lit(0.25), T::lit(0.25), T::lit(2.5)],
            initial_velocity: T::lit(1e3),
        }
    }
}

impl<T: Scalar> KalmanNoise<T> {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .measurement
            .into_iter()
            .chain(self.process_velocity)
            .chain([self.process_observed, self.initial_velocity]);
        for v in all {
            if !v.is_finite() || v <= T::zero() {
                return Err(Error::Config(
                    "Kalman noise variances must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T> {
    pub mean: [T; STATE_DIM],
    pub covariance: Mat7<T>,
}

/// Converts a box into the `(x, y, s, r)` measurement vector.
pub fn measurement_of<T: Scalar>(b: &BoundingBox<T>) -> [T; MEAS_DIM] {
    [b.x, b.y, b.w * b.h, b.w / b.h]
}

impl<T: Scalar> KalmanState<T> {
    /// New state at the measured box with zero velocity.
    pub fn initiate(b: &BoundingBox<T>, noise: &KalmanNoise<T>) -> Self {
        let z = measurement_of(b);
        let mut mean = [T::zero(); STATE_DIM];
        mean[..MEAS_DIM].copy_from_slice(&z);
        let mut covariance = [[T::zero(); STATE_DIM]; STATE_DIM];
        for i in 0..MEAS_DIM {
            covariance[i][i] = noise.measurement[i];
        }
        for i in MEAS_DIM..STATE_DIM {
            covariance[i][i] = noise.initial_velocity;
        }
        Self { mean, covariance }
    }

    /// Builds a state with zero covariance; mostly for tests and examples.
    pub fn from_components(x: T, y: T, s: T, r: T, vx: T, vy: T, vs: T) -> Self {
        Self {
            mean: [x, y, s, r, vx, vy, vs],
            covariance: [[T::zero(); STATE_DIM]; STATE_DIM],
        }
    }

    pub fn x(&self) -> T {
        self.mean[0]
    }
    pub fn y(&self) -> T {
        self.mean[1]
    }
    pub fn scale(&self) -> T {
        self.mean[2]
    }
    pub fn aspect(&self) -> T {
        self.mean[3]
    }
    pub fn velocity(&self) -> (T, T) {
        (self.mean[4], self.mean[5])
    }

    /// Box reconstructed from `(x, y, s, r)`: `w = sqrt(s r)`, `h = s / w`.
    pub fn to_box(&self) -> BoundingBox<T> {
        let s = self.scale().max(min_positive());
        let r = self.aspect().max(min_positive());
        let w = (s * r).sqrt();
        BoundingBox::new(self.x(), self.y(), w, s / w)
    }

    pub fn covariance_trace(&self) -> T {
        (0..STATE_DIM).map(|i| self.covariance[i][i]).sum()
    }

    fn clamp_positive(&mut self) {
        self.mean[2] = self.mean[2].max(min_positive());
        self.mean[3] = self.mean[3].max(min_positive());
    }
}

/// One step of the linear velocity model.
pub fn predict<T: Scalar>(state: &KalmanState<T>, noise: &KalmanNoise<T>) -> KalmanState<T> {
    let mut next = *state;
    next.mean[0] = state.mean[0] + state.mean[4];
    next.mean[1] = state.mean[1] + state.mean[5];
    next.mean[2] = state.mean[2] + state.mean[6];

    // P' = F P F^T + Q, with F = I + E where E maps velocity rows onto positions.
    let p = &state.covariance;
    let mut fp = *p;
    for j in 0..STATE_DIM {
        for i in 0..3 {
            fp[i][j] = p[i][j] + p[i + 4][j];
        }
    }
    let mut fpf = fp;
    for i in 0..STATE_DIM {
        for j in 0..3 {
            fpf[i][j] = fp[i][j] + fp[i][j + 4];
        }
    }
    for i in 0..MEAS_DIM {
        fpf[i][i] = fpf[i][i] + noise.process_observed;
    }
    for i in 0..3 {
        fpf[i + 4][i + 4] = fpf[i + 4][i + 4] + noise.process_velocity[i];
    }
    next.covariance = fpf;
    next.clamp_positive();
    next
}

/// Linear-Gaussian correction with the measured box.
///
/// Uses the Joseph form so the posterior covariance stays symmetric PSD.
pub fn update<T: Scalar>(
    state: &KalmanState<T>,
    b: &BoundingBox<T>,
    noise: &KalmanNoise<T>,
) -> Result<KalmanState<T>> {
    let z = measurement_of(b);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Kalman measurement"));
    }
    let p = &state.covariance;

    let mut innovation = [T::zero(); MEAS_DIM];
    for i in 0..MEAS_DIM {
        innovation[i] = z[i] - state.mean[i];
    }

    let mut s = [[T::zero(); MEAS_DIM]; MEAS_DIM];
    for i in 0..MEAS_DIM {
        for j in 0..MEAS_DIM {
            s[i][j] = p[i][j];
        }
        s[i][i] = s[i][i] + noise.measurement[i];
    }
    let s_inv = invert(s).ok_or(Error::NonFinite("innovation covariance"))?;

    // K = P H^T S^-1, where P H^T is the first four columns of P.
    let mut gain = [[T::zero(); MEAS_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for j in 0..MEAS_DIM {
            gain[i][j] = (0..MEAS_DIM).map(|k| p[i][k] * s_inv[k][j]).sum();
        }
    }

    let mut next = *state;
    for i in 0..STATE_DIM {
        let dx: T = (0..MEAS_DIM).map(|k| gain[i][k] * innovation[k]).sum();
        next.mean[i] = state.mean[i] + dx;
    }

    // A = I - K H
    let mut a = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        a[i][i] = T::one();
        for j in 0..MEAS_DIM {
            a[i][j] = a[i][j] - gain[i][j];
        }
    }
    let ap = mul7(&a, p);
    let mut cov = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            let apat: T = (0..STATE_DIM).map(|k| ap[i][k] * a[j][k]).sum();
            let krk: T = (0..MEAS_DIM)
                .map(|k| gain[i][k] * noise.measurement[k] * gain[j][k])
                .sum();
            cov[i][j] = apat + krk;
        }
    }
    for i in 0..STATE_DIM {
        for j in (i + 1)..STATE_DIM {
            let m = (cov[i][j] + cov[j][i]) * T::half();
            cov[i][j] = m;
            cov[j][i] = m;
        }
    }
    next.covariance = cov;
    next.clamp_positive();
    Ok(next)
}

fn mul7<T: Scalar>(a: &Mat7<T>, b: &Mat7<T>) -> Mat7<T> {
    let mut out = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for k in 0..STATE_DIM {
            let aik = a[i][k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..STATE_DIM {
                out[i][j] = out[i][j] + aik * b[k][j];
            }
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert<T: Scalar, const N: usize>(mut m: [[T; N]; N]) -> Option<[[T; N]; N]> {
    let mut inv = [[T::zero(); N]; N];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for col in 0..N {
        let pivot = (col..N).max_by(|&a, &b| {
            m[a][col]
                .abs()
                .partial_cmp(&m[b][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() <= T::min_positive_value() || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let d = m[col][col];
        for j in 0..N {
            m[col][j] = m[col][j] / d;
            inv[col][j] = inv[col][j] / d;
        }
        for r in 0..N {
            if r == col {
                continue;
            }
            let f = m[r][col];
            if f == T::zero() {
                continue;
            }
            for j in 0..N {
                m[r][j] = m[r][j] - f * m[col][j];
                inv[r][j] = inv[r][j] - f * inv[col][j];
            }
        }
    }
    Some(inv)
}
