use serde::{Deserialize, Serialize};

use super::geo::{haversine_km, GeoPoint};
use super::homography::Homography;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tracker::{HistoryEntry, Track};

/// Windowing parameters for speed estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig<T> {
    /// Frames per speed window (also the conflict analysis window).
    pub window: usize,
    pub fps: T,
    /// Minimum pixel distance between the two half-window averages for a
    /// track to count as moving.
    pub stall_px: T,
}

impl<T: Scalar> Default for MotionConfig<T> {
    fn default() -> Self {
        Self {
            window: 30,
            fps: T::lit(30.0),
            stall_px: T::lit(2.0),
        }
    }
}

impl<T: Scalar> MotionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config("motion window must be >= 2 frames".into()));
        }
        if !(self.fps > T::zero()) || !self.fps.is_finite() {
            return Err(Error::Config("fps must be positive".into()));
        }
        if !(self.stall_px >= T::zero()) {
            return Err(Error::Config("stall_px must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate<T> {
    /// km/h; 0 when stalled.
    pub speed: T,
    pub window: usize,
    pub p: GeoPoint<T>,
    pub q: GeoPoint<T>,
    pub stalled: bool,
}

/// `d · 3600 · fps / f` in km/h for a distance `d` in km over `f` frames.
pub fn speed_from_distance<T: Scalar>(distance_km: T, fps: T, window: usize) -> T {
    distance_km * T::lit(3600.0) * fps / T::from_usize(window)
}

/// Speed of a track over its most recent `cfg.window` history entries.
pub fn estimate_speed<T: Scalar>(
    track: &Track<T>,
    h: &Homography<T>,
    cfg: &MotionConfig<T>,
) -> Result<SpeedEstimate<T>> {
    let need = cfg.window;
    let have = track.history.len();
    if have < need {
        return Err(Error::InsufficientHistory {
            id: track.id,
            have,
            need,
        });
    }
    let (a, b) = track.history.as_slices();
    let recent = a.iter().chain(b).skip(have - need);
    estimate_speed_from_history(recent, h, cfg).map(|s| s.expect("window checked"))
}

/// Speed over the last `cfg.window` entries of `history` (oldest first).
///
/// The first `⌊f/2⌋` and last `⌈f/2⌉` centers are averaged into `p` and
/// `q`. Returns `None` when fewer than `f` entries are given.
pub fn estimate_speed_from_history<'a, T: Scalar>(
    history: impl IntoIterator<Item = &'a HistoryEntry<T>>,
    h: &Homography<T>,
    cfg: &MotionConfig<T>,
) -> Result<Option<SpeedEstimate<T>>> {
    let f = cfg.window;
    let entries: Vec<_> = history.into_iter().collect();
    if entries.len() < f || f < 2 {
        return Ok(None);
    }
    let window = &entries[entries.len() - f..];
    let (first, second) = window.split_at(f / 2);
    let avg = |part: &[&HistoryEntry<T>]| {
        let n = T::from_usize(part.len());
        let (sx, sy) = part
            .iter()
            .fold((T::zero(), T::zero()), |(x, y), e| (x + e.x, y + e.y));
        (sx / n, sy / n)
    };
    let (px, py) = avg(first);
    let (qx, qy) = avg(second);
    let p = h.image_to_world(px, py)?;
    let q = h.image_to_world(qx, qy)?;
    let stalled = (qx - px).hypot(qy - py) < cfg.stall_px;
    let speed = if stalled {
        T::zero()
    } else {
        speed_from_distance(haversine_km(&p, &q), cfg.fps, f)
    };
    Ok(Some(SpeedEstimate {
        speed,
        window: f,
        p,
        q,
        stalled,
    }))
}
