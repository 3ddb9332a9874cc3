//! Trajectory-conflict heuristics over pairs of nearby road users.
//!
//! A pair is reported when the two are close, approach each other at a
//! considerable angle, were both moving, and at least one of them shows a
//! sudden speed drop in the most recent frames.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, Homography, SpeedEstimate};
use crate::ingest::ClassLabel;
use crate::scalar::Scalar;
use crate::tracker::{HistoryEntry, Track, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictType {
    V2V,
    V2P,
    V2B,
}

impl ConflictType {
    pub fn as_str(self) -> &'static str {
        match self {
            ConflictType::V2V => "V2V",
            ConflictType::V2P => "V2P",
            ConflictType::V2B => "V2B",
        }
    }
}

impl fmt::Display for ConflictType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Conflict type of a class pair. Only pairs involving a vehicle qualify.
pub fn event_type(a: ClassLabel, b: ClassLabel) -> Option<ConflictType> {
    use ClassLabel::*;
    match (a, b) {
        (Vehicle, Vehicle) => Some(ConflictType::V2V),
        (Vehicle, Pedestrian) | (Pedestrian, Vehicle) => Some(ConflictType::V2P),
        (Vehicle, Bicycle) | (Bicycle, Vehicle) => Some(ConflictType::V2B),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Accident,
    NearAccident,
}

/// Which past point the approach direction is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleReference {
    /// Where the track was first observed.
    #[default]
    FirstObserved,
    /// The oldest center inside the motion window.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConflictConfig<T> {
    /// Center distance threshold as a multiple of the mean box diagonal.
    pub proximity: T,
    /// Degrees.
    pub min_angle: T,
    /// km/h a vehicle or bicycle must have been moving at.
    pub min_speed: T,
    /// km/h a pedestrian must have been moving at.
    pub min_pedestrian_speed: T,
    /// Fractional drop of the latest speed versus the earlier window mean.
    pub drop_ratio: T,
    /// Frames at the end of the window excluded from the earlier mean.
    pub recent_frames: usize,
    /// Frames during which a reported pair is not reported again.
    pub cooldown: u64,
    pub angle_reference: AngleReference,
}

impl<T: Scalar> Default for ConflictConfig<T> {
    fn default() -> Self {
        Self {
            proximity: T::lit(1.5),
            min_angle: T::lit(35.0),
            min_speed: T::lit(10.0),
            min_pedestrian_speed: T::lit(1.5),
            drop_ratio: T::lit(0.5),
            recent_frames: 5,
            cooldown: 60,
            angle_reference: AngleReference::FirstObserved,
        }
    }
}

impl<T: Scalar> ConflictConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v.is_finite() && v > T::zero();
        if !pos(self.proximity) {
            return Err(Error::Config("proximity must be > 0".into()));
        }
        if !(self.min_angle > T::zero() && self.min_angle < T::lit(180.0)) {
            return Err(Error::Config(
                "min_angle must lie in (0, 180) degrees".into(),
            ));
        }
        if !pos(self.min_speed) || !pos(self.min_pedestrian_speed) {
            return Err(Error::Config("minimum speeds must be > 0".into()));
        }
        if !(self.drop_ratio > T::zero() && self.drop_ratio < T::one()) {
            return Err(Error::Config("drop_ratio must lie in (0, 1)".into()));
        }
        if self.recent_frames == 0 || self.cooldown == 0 {
            return Err(Error::Config(
                "recent_frames and cooldown must be > 0".into(),
            ));
        }
        Ok(())
    }

    fn moving_threshold(&self, class: ClassLabel) -> T {
        match class {
            ClassLabel::Pedestrian => self.min_pedestrian_speed,
            _ => self.min_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent<T> {
    pub frame: u64,
    /// Pixel midpoint between the two track centers.
    pub location: (T, T),
    pub geo: GeoPoint<T>,
    #[serde(rename = "type")]
    pub conflict_type: ConflictType,
    pub severity: Severity,
    pub participants: (TrackId, TrackId),
    /// Degrees.
    pub angle: T,
    /// Earlier-window mean speeds, km/h.
    pub speeds_before: (T, T),
    /// Latest speeds, km/h.
    pub speeds_after: (T, T),
}

/// Recent speed estimates of one track, keyed by frame.
#[derive(Debug, Clone)]
pub struct SpeedSeries<T> {
    capacity: usize,
    entries: VecDeque<(u64, SpeedEstimate<T>)>,
}

impl<T: Scalar> SpeedSeries<T> {
    pub fn new(window: usize) -> Self {
        Self {
            capacity: window.max(2),
            entries: VecDeque::with_capacity(window.max(2)),
        }
    }

    /// Appends an estimate; drops entries older than the window.
    pub fn push(&mut self, frame: u64, estimate: SpeedEstimate<T>) {
        let horizon = frame.saturating_sub(self.capacity as u64 - 1);
        while self.entries.front().is_some_and(|(f, _)| *f < horizon) {
            self.entries.pop_front();
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((frame, estimate));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn latest(&self) -> Option<&(u64, SpeedEstimate<T>)> {
        self.entries.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u64, SpeedEstimate<T>)> {
        self.entries.iter()
    }

    /// Mean speed over the window excluding its last `recent_frames` frames.
    pub fn earlier_mean(&self, recent_frames: usize) -> Option<T> {
        let (latest, _) = *self.latest()?;
        let cutoff = latest.checked_sub(recent_frames as u64)?;
        let (sum, n) = self
            .entries
            .iter()
            .take_while(|(f, _)| *f <= cutoff)
            .fold((T::zero(), 0usize), |(s, n), (_, e)| (s + e.speed, n + 1));
        (n > 0).then(|| sum / T::from_usize(n))
    }
}

/// True when the track moved at `min_speed` or more earlier in the window
/// and its latest speed is at most `(1 - drop_ratio)` of that mean.
pub fn speed_drop<T: Scalar>(
    series: &SpeedSeries<T>,
    drop_ratio: T,
    recent_frames: usize,
    min_speed: T,
) -> bool {
    if series.len() < 2 {
        return false;
    }
    let (Some(mean), Some((_, latest))) = (series.earlier_mean(recent_frames), series.latest())
    else {
        return false;
    };
    mean >= min_speed && latest.speed <= (T::one() - drop_ratio) * mean
}

/// Index pairs `(i, j)`, `i < j`, whose boxes overlap or whose centers are
/// closer than `proximity` times the mean of the two box diagonals.
pub fn close_pairs<T: Scalar>(tracks: &[&Track<T>], proximity: T) -> Vec<(usize, usize)> {
    let boxes: Vec<_> = tracks.iter().map(|t| t.bbox()).collect();
    let mut out = Vec::new();
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            let (a, b) = (&boxes[i], &boxes[j]);
            let limit = proximity * (a.diagonal() + b.diagonal()) * T::half();
            if a.iou(b) > T::zero() || a.center_distance(b) < limit {
                out.push((i, j));
            }
        }
    }
    out
}

/// Acute angle in degrees between the lines along two displacement vectors.
///
/// Equals `|arctan((m_a − m_b) / (1 + m_a m_b))|` for slopes `m = dy/dx`
/// wherever that is defined, and is also defined for vertical and
/// perpendicular motion. `None` when either vector is zero.
pub fn angle_between<T: Scalar>(a: (T, T), b: (T, T)) -> Option<T> {
    let zero = |v: (T, T)| v.0 == T::zero() && v.1 == T::zero();
    if zero(a) || zero(b) {
        return None;
    }
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    Some(cross.abs().atan2(dot.abs()).to_degrees())
}

fn reference_point<T: Scalar>(
    t: &Track<T>,
    mode: AngleReference,
    window: usize,
) -> HistoryEntry<T> {
    match mode {
        AngleReference::FirstObserved => t.first_observed,
        AngleReference::Window => {
            let skip = t.history.len().saturating_sub(window);
            t.history.get(skip).copied().unwrap_or(t.first_observed)
        }
    }
}

fn displacement<T: Scalar>(t: &Track<T>, mode: AngleReference, window: usize) -> (T, T) {
    let r = reference_point(t, mode, window);
    let (x, y) = t.center();
    (x - r.x, y - r.y)
}

/// Approach angle between two tracks from their first observed centers to
/// their current centers.
pub fn approach_angle<T: Scalar>(a: &Track<T>, b: &Track<T>) -> Result<T> {
    approach_angle_with(a, b, AngleReference::FirstObserved, 0)
}

pub fn approach_angle_with<T: Scalar>(
    a: &Track<T>,
    b: &Track<T>,
    mode: AngleReference,
    window: usize,
) -> Result<T> {
    angle_between(displacement(a, mode, window), displacement(b, mode, window)).ok_or(
        Error::NonFinite("approach direction of a track that has not moved"),
    )
}

/// Stateful conflict detector for one stream. Owns the per-pair cooldown table.
#[derive(Debug, Clone)]
pub struct ConflictDetector<T> {
    config: ConflictConfig<T>,
    window: usize,
    last_reported: HashMap<(TrackId, TrackId), u64>,
}

impl<T: Scalar> ConflictDetector<T> {
    pub fn new(config: ConflictConfig<T>, window: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            window,
            last_reported: HashMap::new(),
        })
    }

    pub fn config(&self) -> &ConflictConfig<T> {
        &self.config
    }

    /// Forget cooldown entries of deleted tracks.
    pub fn forget(&mut self, id: TrackId) {
        self.last_reported.retain(|(a, b), _| *a != id && *b != id);
    }

    /// Conflicts at `frame` among the confirmed tracks.
    pub fn detect(
        &mut self,
        frame: u64,
        tracks: &[Track<T>],
        speeds: &HashMap<TrackId, SpeedSeries<T>>,
        homography: &Homography<T>,
    ) -> Vec<ConflictEvent<T>> {
        let cfg = self.config;
        let confirmed: Vec<&Track<T>> = tracks.iter().filter(|t| t.is_confirmed()).collect();
        let mut events = Vec::new();

        for (i, j) in close_pairs(&confirmed, cfg.proximity) {
            let (a, b) = (confirmed[i], confirmed[j]);
            let Some(kind) = event_type(a.class, b.class) else {
                continue;
            };
            let key = (a.id.min(b.id), a.id.max(b.id));
            if let Some(&last) = self.last_reported.get(&key) {
                if frame.saturating_sub(last) < cfg.cooldown {
                    continue;
                }
            }
            let Ok(angle) = approach_angle_with(a, b, cfg.angle_reference, self.window) else {
                continue;
            };
            if angle < cfg.min_angle {
                continue;
            }
            let (Some(sa), Some(sb)) = (speeds.get(&a.id), speeds.get(&b.id)) else {
                continue;
            };
            let (Some(mean_a), Some(mean_b)) = (
                sa.earlier_mean(cfg.recent_frames),
                sb.earlier_mean(cfg.recent_frames),
            ) else {
                continue;
            };
            if mean_a < cfg.moving_threshold(a.class) || mean_b < cfg.moving_threshold(b.class) {
                continue;
            }
            // A pedestrian's own speed profile only feeds the moving gate.
            let drops = |t: &Track<T>, s: &SpeedSeries<T>| {
                t.class != ClassLabel::Pedestrian
                    && speed_drop(s, cfg.drop_ratio, cfg.recent_frames, cfg.min_speed)
            };
            if !(drops(a, sa) || drops(b, sb)) {
                continue;
            }

            let (ax, ay) = a.center();
            let (bx, by) = b.center();
            let location = ((ax + bx) * T::half(), (ay + by) * T::half());
            let Ok(geo) = homography.image_to_world(location.0, location.1) else {
                log::warn!("conflict at frame {frame} lies outside the calibrated plane");
                continue;
            };
            let severity = if a.bbox().iou(&b.bbox()) > T::zero() {
                Severity::Accident
            } else {
                Severity::NearAccident
            };
            let latest = |s: &SpeedSeries<T>| s.latest().map_or(T::zero(), |(_, e)| e.speed);
            self.last_reported.insert(key, frame);
            events.push(ConflictEvent {
                frame,
                location,
                geo,
                conflict_type: kind,
                severity,
                participants: (a.id, b.id),
                angle,
                speeds_before: (mean_a, mean_b),
                speeds_after: (latest(sa), latest(sb)),
            });
        }
        events
    }
}
