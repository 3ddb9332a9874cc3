//! Scoring detected events against labelled ground truth, and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflict::{ConflictEvent, ConflictType};
use crate::error::{Error, Result};
use crate::ingest::FrameDetections;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::scalar::Scalar;
use crate::scenario::{synthetic_homography, GroundTruthEvent, Scenario};

/// Frames a detection may fall outside a labelled range and still count.
pub const DEFAULT_TOLERANCE: u64 = 60;

/// How one labelled event was resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub start: u64,
    pub end: u64,
    #[serde(rename = "type")]
    pub conflict_type: ConflictType,
    /// Frame of the matched detection, if any.
    pub detected_frame: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total: usize,
    pub detected: usize,
    pub missed: usize,
    pub false_alarms: usize,
    /// `None` when there is nothing to detect.
    pub detection_rate: Option<f64>,
    /// False alarms per labelled event (per one event if none are labelled).
    pub false_alarm_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matches: Vec<MatchRow>,
    /// Frames of unmatched detections.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub false_alarm_frames: Vec<u64>,
}

impl EvaluationReport {
    fn from_counts(total: usize, detected: usize, false_alarms: usize) -> Self {
        Self {
            total,
            detected,
            missed: total - detected,
            false_alarms,
            detection_rate: (total > 0).then(|| detected as f64 / total as f64),
            false_alarm_rate: false_alarms as f64 / total.max(1) as f64,
            matches: Vec::new(),
            false_alarm_frames: Vec::new(),
        }
    }

    /// Pools counts; per-event rows are dropped.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> Self {
        let (mut total, mut detected, mut fa) = (0, 0, 0);
        for r in reports {
            total += r.total;
            detected += r.detected;
            fa += r.false_alarms;
        }
        Self::from_counts(total, detected, fa)
    }

    pub fn summary(&self) -> String {
        let dr = self
            .detection_rate
            .map_or_else(|| "n/a".to_string(), |d| format!("{d:.3}"));
        format!(
            "detected {}/{} (DR {dr}), false alarms {} (FAR {:.3})",
            self.detected, self.total, self.false_alarms, self.false_alarm_rate
        )
    }
}

/// One-to-one greedy matching.
///
/// Detections are visited in `(frame, participants, type)` order; each takes
/// the earliest-starting unmatched label of the same type whose range,
/// widened by `tolerance` on both sides, contains the detection frame.
/// The outcome does not depend on the input order of either list.
pub fn match_events<T: Scalar>(
    truth: &[GroundTruthEvent],
    detected: &[ConflictEvent<T>],
    tolerance: u64,
) -> EvaluationReport {
    let mut labels: Vec<_> = truth.to_vec();
    labels.sort_by_key(|t| (t.start, t.end, t.conflict_type, t.participants));
    let mut events: Vec<_> = detected
        .iter()
        .map(|e| (e.frame, e.participants, e.conflict_type))
        .collect();
    events.sort();

    let mut taken: Vec<Option<u64>> = vec![None; labels.len()];
    let mut false_alarm_frames = Vec::new();
    for (frame, _, kind) in events {
        let hit = labels.iter().enumerate().position(|(i, t)| {
            taken[i].is_none()
                && t.conflict_type == kind
                && frame + tolerance >= t.start
                && frame <= t.end + tolerance
        });
        match hit {
            Some(i) => taken[i] = Some(frame),
            None => false_alarm_frames.push(frame),
        }
    }
    let detected_count = taken.iter().filter(|t| t.is_some()).count();
    let mut report =
        EvaluationReport::from_counts(labels.len(), detected_count, false_alarm_frames.len());
    report.matches = labels
        .iter()
        .zip(&taken)
        .map(|(t, &d)| MatchRow {
            start: t.start,
            end: t.end,
            conflict_type: t.conflict_type,
            detected_frame: d,
        })
        .collect();
    report.false_alarm_frames = false_alarm_frames;
    report
}

/// Runs the pipeline over in-memory frames with the synthetic calibration.
pub fn detect_frames<T: Scalar>(
    frames: &[FrameDetections<T>],
    config: &PipelineConfig<T>,
) -> Result<Vec<ConflictEvent<T>>> {
    let mut pipeline = Pipeline::new(config, synthetic_homography())?;
    pipeline.run_frames(frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub tolerance: u64,
    pub scenarios: Vec<ScenarioReport>,
    pub overall: EvaluationReport,
}

/// Renders every scenario with `seed`, runs detection and scores it.
pub fn evaluate_suite<T: Scalar>(
    suite: &[Scenario<T>],
    seed: u64,
    config: &PipelineConfig<T>,
    tolerance: u64,
) -> Result<SuiteReport> {
    let scenarios = suite
        .par_iter()
        .map(|s| {
            let stream = s.render(seed)?;
            let events = detect_frames(&stream.frames, config)?;
            Ok(ScenarioReport {
                scenario: s.name.clone(),
                report: match_events(&s.truth, &events, tolerance),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let overall = EvaluationReport::aggregate(scenarios.iter().map(|s| &s.report));
    Ok(SuiteReport {
        seed,
        tolerance,
        scenarios,
        overall,
    })
}

/// Candidate values per tunable; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct SweepGrid<T> {
    pub tau_d: Vec<T>,
    pub proximity: Vec<T>,
    pub min_angle: Vec<T>,
    pub min_speed: Vec<T>,
    pub drop_ratio: Vec<T>,
}

/// One parameter combination and its pooled score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepRow<T> {
    pub tau_d: T,
    pub proximity: T,
    pub min_angle: T,
    pub min_speed: T,
    pub drop_ratio: T,
    pub detection_rate: Option<f64>,
    pub false_alarm_rate: f64,
}

pub const SWEEP_HEADER: &str =
    "tau_d,proximity,min_angle,min_speed,drop_ratio,detection_rate,false_alarm_rate";

impl<T: Scalar> SweepRow<T> {
    pub fn to_csv_line(&self) -> String {
        let dr = self
            .detection_rate
            .map_or_else(String::new, |d| format!("{d:.4}"));
        format!(
            "{},{},{},{},{},{dr},{:.4}",
            self.tau_d,
            self.proximity,
            self.min_angle,
            self.min_speed,
            self.drop_ratio,
            self.false_alarm_rate
        )
    }
}

impl<T: Scalar> SweepGrid<T> {
    /// Cartesian product over the grid, falling back to `base` for empty axes.
    pub fn expand(&self, base: &PipelineConfig<T>) -> Vec<PipelineConfig<T>> {
        let axis = |v: &[T], b: T| if v.is_empty() { vec![b] } else { v.to_vec() };
        let c = &base.conflict;
        let mut out = Vec::new();
        for &tau in &axis(&self.tau_d, base.tracker.tau_d) {
            for &prox in &axis(&self.proximity, c.proximity) {
                for &angle in &axis(&self.min_angle, c.min_angle) {
                    for &speed in &axis(&self.min_speed, c.min_speed) {
                        for &drop in &axis(&self.drop_ratio, c.drop_ratio) {
                            let mut cfg = base.clone();
                            cfg.tracker.tau_d = tau;
                            cfg.conflict.proximity = prox;
                            cfg.conflict.min_angle = angle;
                            cfg.conflict.min_speed = speed;
                            cfg.conflict.drop_ratio = drop;
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Scores every grid point on the suite, best first (DR descending, then
/// FAR ascending). Streams are rendered once and shared across grid points.
pub fn sweep<T: Scalar>(
    suite: &[Scenario<T>],
    seed: u64,
    base: &PipelineConfig<T>,
    grid: &SweepGrid<T>,
    tolerance: u64,
) -> Result<Vec<SweepRow<T>>> {
    let configs = grid.expand(base);
    for cfg in &configs {
        cfg.tracker.validate()?;
        cfg.conflict.validate()?;
    }
    let streams = suite
        .iter()
        .map(|s| s.render(seed).map(|r| r.frames))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = configs
        .par_iter()
        .map(|cfg| {
            let mut reports = Vec::with_capacity(suite.len());
            for (s, frames) in suite.iter().zip(&streams) {
                let events = detect_frames(frames, cfg)?;
                reports.push(match_events(&s.truth, &events, tolerance));
            }
            let pooled = EvaluationReport::aggregate(&reports);
            Ok(SweepRow {
                tau_d: cfg.tracker.tau_d,
                proximity: cfg.conflict.proximity,
                min_angle: cfg.conflict.min_angle,
                min_speed: cfg.conflict.min_speed,
                drop_ratio: cfg.conflict.drop_ratio,
                detection_rate: pooled.detection_rate,
                false_alarm_rate: pooled.false_alarm_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        let dr = |r: &SweepRow<T>| r.detection_rate.unwrap_or(-1.0);
        dr(b)
            .total_cmp(&dr(a))
            .then(a.false_alarm_rate.total_cmp(&b.false_alarm_rate))
    });
    if rows.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    Ok(rows)
}
