//! Multi-object tracker: per-track Kalman filters, Hungarian association
//! over the four-term cost, and track lifecycle.

pub mod assignment;
pub mod cost;
pub mod kalman;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AppearanceHistogram, BoundingBox, ClassLabel, Detection, FrameDetections};
use crate::scalar::Scalar;

pub use assignment::{hungarian_assign, CostMatrix};
pub use cost::{
    appearance_cost, jaccard_cost, position_cost, size_cost, total_cost, AppearanceCost,
    CenteredHistogram, CostTerms, CostWeights,
};
pub use kalman::{KalmanNoise, KalmanState};

pub type TrackId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Deleted => "deleted",
        }
    }
}

/// A track center at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry<T> {
    pub frame: u64,
    pub x: T,
    pub y: T,
}

#[derive(Debug, Clone)]
pub struct Track<T> {
    pub id: TrackId,
    pub class: ClassLabel,
    pub state: KalmanState<T>,
    /// Exponentially smoothed appearance.
    pub histogram: Option<AppearanceHistogram<T>>,
    pub hits: u32,
    /// Consecutive frames without an associated detection.
    pub misses: u32,
    pub status: TrackStatus,
    pub history: VecDeque<HistoryEntry<T>>,
    history_capacity: usize,
    pub first_observed: HistoryEntry<T>,
}

impl<T: Scalar> Track<T> {
    pub fn new(id: TrackId, det: &Detection<T>, config: &TrackerConfig<T>) -> Self {
        let first = HistoryEntry {
            frame: det.frame,
            x: det.bbox.x,
            y: det.bbox.y,
        };
        let capacity = config.history_capacity.max(1);
        let mut history = VecDeque::with_capacity(capacity);
        history.push_back(first);
        Self {
            id,
            class: det.class,
            state: KalmanState::initiate(&det.bbox, &config.noise),
            histogram: det.histogram.clone(),
            hits: 1,
            misses: 0,
            status: if config.min_hits <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            },
            history,
            history_capacity: capacity,
            first_observed: first,
        }
    }

    /// Box reconstructed from the current state.
    pub fn bbox(&self) -> BoundingBox<T> {
        self.state.to_box()
    }

    pub fn center(&self) -> (T, T) {
        (self.state.x(), self.state.y())
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Deleted
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.history.back().map(|h| h.frame)
    }

    fn record(&mut self, frame: u64) {
        if self.last_frame().is_some_and(|f| f >= frame) {
            return;
        }
        if self.history.len() == self.history_capacity {
            self.history.pop_front();
        }
        self.history.push_back(HistoryEntry {
            frame,
            x: self.state.x(),
            y: self.state.y(),
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct TrackerConfig<T> {
    pub weights: CostWeights<T>,
    /// Matches costing more than this are rejected (the detection starts a new track).
    pub tau_d: T,
    pub noise: KalmanNoise<T>,
    pub min_hits: u32,
    pub max_age: u32,
    /// Fraction of the running histogram kept on each update.
    pub histogram_alpha: T,
    pub history_capacity: usize,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            tau_d: T::lit(0.6),
            noise: KalmanNoise::default(),
            min_hits: 3,
            max_age: 10,
            histogram_alpha: T::lit(0.9),
            history_capacity: 120,
        }
    }
}

impl<T: Scalar> TrackerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.tau_d.is_finite() || self.tau_d < T::zero() {
            return Err(Error::Config("tau_d must be finite and >= 0".into()));
        }
        if !(self.histogram_alpha >= T::zero() && self.histogram_alpha <= T::one()) {
            return Err(Error::Config("histogram_alpha must lie in [0, 1]".into()));
        }
        if self.history_capacity < 2 {
            return Err(Error::Config("history_capacity must be >= 2".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationResult<T> {
    /// `(track id, detection index, cost)`
    pub matches: Vec<(TrackId, usize, T)>,
    pub unmatched_tracks: Vec<TrackId>,
    pub unmatched_detections: Vec<usize>,
}

/// Hungarian association of detections to (already predicted) tracks.
///
/// Pairs of different class are never matched. Assigned pairs costing more
/// than `tau_d` are split back into unmatched tracks and detections.
pub fn associate<T: Scalar>(
    tracks: &[Track<T>],
    detections: &[Detection<T>],
    weights: &CostWeights<T>,
    tau_d: T,
) -> Result<AssociationResult<T>> {
    let n = tracks.len();
    let m = detections.len();
    if n == 0 || m == 0 {
        return Ok(AssociationResult {
            matches: Vec::new(),
            unmatched_tracks: tracks.iter().map(|t| t.id).collect(),
            unmatched_detections: (0..m).collect(),
        });
    }

    let track_hists: Vec<_> = tracks
        .iter()
        .map(|t| t.histogram.as_ref().and_then(CenteredHistogram::new))
        .collect();
    let track_boxes: Vec<_> = tracks.iter().map(Track::bbox).collect();
    let det_hists: Vec<_> = detections
        .iter()
        .map(|d| d.histogram.as_ref().and_then(CenteredHistogram::new))
        .collect();

    // Cross-class entries get a finite sentinel larger than any feasible
    // total, so the solver only uses them when a row or column has no
    // same-class partner at all; they are then rejected by the gate.
    let sentinel = T::from_usize(n.max(m)) + tau_d.max(T::one()) + T::one();
    let cost = CostMatrix::from_fn(n, m, |i, j| {
        let d = &detections[j];
        if tracks[i].class != d.class {
            return sentinel;
        }
        CostTerms::compute(
            &track_boxes[i],
            track_hists[i].as_ref(),
            &d.bbox,
            det_hists[j].as_ref(),
        )
        .weighted(weights)
    });

    let mut track_used = vec![false; n];
    let mut det_used = vec![false; m];
    let mut matches = Vec::new();
    for (i, j) in hungarian_assign(&cost)? {
        let c = cost.get(i, j);
        if tracks[i].class == detections[j].class && c <= tau_d {
            track_used[i] = true;
            det_used[j] = true;
            matches.push((tracks[i].id, j, c));
        }
    }
    Ok(AssociationResult {
        matches,
        unmatched_tracks: tracks
            .iter()
            .zip(&track_used)
            .filter(|(_, &u)| !u)
            .map(|(t, _)| t.id)
            .collect(),
        unmatched_detections: (0..m).filter(|&j| !det_used[j]).collect(),
    })
}

/// What happened during one [`Tracker::step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport<T> {
    pub frame: u64,
    pub association: AssociationResult<T>,
    pub spawned: Vec<TrackId>,
    pub confirmed: Vec<TrackId>,
    pub deleted: Vec<TrackId>,
}

/// Tracker state for one camera stream.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    config: TrackerConfig<T>,
    tracks: Vec<Track<T>>,
    next_id: TrackId,
    last_frame: Option<u64>,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(config: TrackerConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.config
    }

    /// Live tracks (tentative and confirmed), in creation order.
    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track<T>> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track<T>> {
        self.tracks.iter().filter(|t| t.is_confirmed())
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Advances the tracker to `frame.frame`.
    ///
    /// Skipped frame indices are processed as frames without detections, so
    /// the returned report covers only the last frame while the skipped ones
    /// still age tracks and extend their histories.
    pub fn step(&mut self, frame: &FrameDetections<T>) -> Result<StepReport<T>> {
        if let Some(prev) = self.last_frame {
            if frame.frame <= prev {
                return Err(Error::OutOfOrderFrame {
                    frame: frame.frame,
                    previous: prev,
                });
            }
            let mut deleted = Vec::new();
            for skipped in (prev + 1)..frame.frame {
                deleted.extend(self.step_one(&FrameDetections::empty(skipped))?.deleted);
            }
            let mut report = self.step_one(frame)?;
            deleted.append(&mut report.deleted);
            report.deleted = deleted;
            return Ok(report);
        }
        self.step_one(frame)
    }

    fn step_one(&mut self, frame: &FrameDetections<T>) -> Result<StepReport<T>> {
        let cfg = self.config;
        self.last_frame = Some(frame.frame);

        for t in &mut self.tracks {
            t.state = kalman::predict(&t.state, &cfg.noise);
        }

        let association = associate(&self.tracks, &frame.detections, &cfg.weights, cfg.tau_d)?;
        let mut report = StepReport {
            frame: frame.frame,
            ..Default::default()
        };

        for &(id, j, _) in &association.matches {
            let det = &frame.detections[j];
            let t = self
                .tracks
                .iter_mut()
                .find(|t| t.id == id)
                .expect("matched track exists");
            t.state = kalman::update(&t.state, &det.bbox, &cfg.noise)?;
            match (&mut t.histogram, &det.histogram) {
                (Some(th), Some(dh)) => th.blend(dh, cfg.histogram_alpha),
                (None, Some(dh)) => t.histogram = Some(dh.clone()),
                _ => {}
            }
            t.hits += 1;
            t.misses = 0;
            if t.status == TrackStatus::Tentative && t.hits >= cfg.min_hits {
                t.status = TrackStatus::Confirmed;
                report.confirmed.push(t.id);
            }
        }

        for id in &association.unmatched_tracks {
            if let Some(t) = self.tracks.iter_mut().find(|t| t.id == *id) {
                t.misses += 1;
                if t.misses > cfg.max_age {
                    t.status = TrackStatus::Deleted;
                    report.deleted.push(t.id);
                }
            }
        }
        self.tracks.retain(Track::is_live);

        for &j in &association.unmatched_detections {
            let id = self.next_id;
            self.next_id += 1;
            let t = Track::new(id, &frame.detections[j], &cfg);
            if t.is_confirmed() {
                report.confirmed.push(id);
            }
            self.tracks.push(t);
            report.spawned.push(id);
        }

        for t in &mut self.tracks {
            t.record(frame.frame);
        }
        report.association = association;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u64, class: ClassLabel, x: f64, y: f64) -> Detection<f64> {
        Detection {
            frame,
            class,
            bbox: BoundingBox::new(x, y, 20.0, 10.0),
            confidence: 1.0,
            histogram: None,
        }
    }

    fn frame(frame: u64, dets: Vec<Detection<f64>>) -> FrameDetections<f64> {
        FrameDetections {
            frame,
            detections: dets,
        }
    }

    #[test]
    fn no_tracks_leaves_everything_unmatched() {
        let dets = vec![det(0, ClassLabel::Vehicle, 10.0, 10.0)];
        let r = associate::<f64>(&[], &dets, &CostWeights::default(), 0.6).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_detections, vec![0]);
    }

    #[test]
    fn identical_box_matches_at_zero_cost() {
        let cfg = TrackerConfig::default();
        let d = det(0, ClassLabel::Vehicle, 100.0, 50.0);
        let t = Track::new(7, &d, &cfg);
        let r = associate(&[t], &[d], &cfg.weights, cfg.tau_d).unwrap();
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].0, 7);
        assert!(r.matches[0].2.abs() < 1e-12);
    }

    #[test]
    fn class_gate() {
        let cfg = TrackerConfig::default();
        let t = Track::new(1, &det(0, ClassLabel::Vehicle, 100.0, 50.0), &cfg);
        let d = det(0, ClassLabel::Pedestrian, 102.0, 50.0);
        let r = associate(&[t], &[d], &cfg.weights, cfg.tau_d).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_tracks, vec![1]);
        assert_eq!(r.unmatched_detections, vec![0]);
    }

    #[test]
    fn out_of_order_frame_rejected() {
        let mut tr = Tracker::new(TrackerConfig::<f64>::default()).unwrap();
        tr.step(&frame(5, vec![])).unwrap();
        assert!(matches!(
            tr.step(&frame(5, vec![])),
            Err(Error::OutOfOrderFrame { .. })
        ));
    }

    #[test]
    fn linear_object_gives_one_confirmed_track() {
        let mut tr = Tracker::new(TrackerConfig::<f64>::default()).unwrap();
        for f in 0..10u64 {
            let x = 100.0 + 3.0 * f as f64;
            tr.step(&frame(f, vec![det(f, ClassLabel::Vehicle, x, 200.0)]))
                .unwrap();
        }
        assert_eq!(tr.tracks().len(), 1);
        let t = &tr.tracks()[0];
        assert!(t.is_confirmed());
        assert_eq!(t.history.len(), 10);
        assert!(t
            .history
            .iter()
            .zip(t.history.iter().skip(1))
            .all(|(a, b)| a.frame < b.frame));
    }

    fn occlusion_run(gap: u64) -> (Vec<TrackId>, Vec<TrackId>) {
        let cfg = TrackerConfig::<f64>::default();
        let mut tr = Tracker::new(cfg).unwrap();
        let mut deleted = Vec::new();
        let x = |f: u64| 100.0 + 3.0 * f as f64;
        for f in 0..20u64 {
            tr.step(&frame(f, vec![det(f, ClassLabel::Vehicle, x(f), 200.0)]))
                .unwrap();
        }
        let before: Vec<_> = tr.tracks().iter().map(|t| t.id).collect();
        for f in 20..20 + gap {
            deleted.extend(tr.step(&frame(f, vec![])).unwrap().deleted);
        }
        let f = 20 + gap;
        deleted.extend(
            tr.step(&frame(f, vec![det(f, ClassLabel::Vehicle, x(f), 200.0)]))
                .unwrap()
                .deleted,
        );
        let after: Vec<_> = tr.tracks().iter().map(|t| t.id).collect();
        assert!(deleted.iter().all(|d| before.contains(d)));
        (before, after)
    }

    #[test]
    fn gap_of_max_age_keeps_identity() {
        let (before, after) = occlusion_run(10);
        assert_eq!(before, after);
    }

    #[test]
    fn gap_beyond_max_age_respawns() {
        let (before, after) = occlusion_run(11);
        assert_eq!(after.len(), 1);
        assert_ne!(before, after);
    }

    #[test]
    fn skipped_frames_are_aged() {
        let mut tr = Tracker::new(TrackerConfig::<f64>::default()).unwrap();
        tr.step(&frame(0, vec![det(0, ClassLabel::Vehicle, 50.0, 50.0)]))
            .unwrap();
        let r = tr.step(&frame(20, vec![])).unwrap();
        assert_eq!(r.deleted, vec![1]);
        assert!(tr.tracks().is_empty());
    }
}
