//! Real-time road-user tracking and trajectory-conflict detection for
//! intersection cameras.
//!
//! The pipeline consumes per-frame detections from an external detector,
//! keeps Kalman-filtered tracks with Hungarian association over a four-term
//! dissimilarity cost, estimates ground speeds through a calibrated
//! homography, and reports vehicle-to-vehicle, vehicle-to-pedestrian and
//! vehicle-to-bicycle conflicts.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` / `*F32` aliases below cover the common instantiations.

// NaN must fail validation, and the fixed-size matrix code reads best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conflict;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod ingest;
pub mod pipeline;
pub mod scalar;
pub mod scenario;
pub mod tracker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use conflict::{ConflictConfig, ConflictDetector, ConflictEvent, ConflictType, Severity};
pub use evaluation::{match_events, EvaluationReport};
pub use geometry::{haversine_km, GeoPoint, Homography, SpeedEstimate};
pub use ingest::{
    AppearanceHistogram, BoundingBox, ClassLabel, Detection, DetectionReader, FrameDetections,
};
pub use pipeline::{run_detect, Pipeline, PipelineConfig};
pub use scenario::{builtin_suite, GroundTruthEvent, Scenario, ScriptedActor};
pub use tracker::{CostWeights, Track, TrackStatus, Tracker, TrackerConfig};

pub type BoundingBoxF64 = BoundingBox<f64>;
pub type BoundingBoxF32 = BoundingBox<f32>;
pub type DetectionF64 = Detection<f64>;
pub type DetectionF32 = Detection<f32>;
pub type FrameDetectionsF64 = FrameDetections<f64>;
pub type FrameDetectionsF32 = FrameDetections<f32>;
pub type TrackerF64 = Tracker<f64>;
pub type TrackerF32 = Tracker<f32>;
pub type HomographyF64 = Homography<f64>;
pub type HomographyF32 = Homography<f32>;
pub type GeoPointF64 = GeoPoint<f64>;
pub type ConflictEventF64 = ConflictEvent<f64>;
pub type PipelineF64 = Pipeline<f64>;
pub type PipelineF32 = Pipeline<f32>;
pub type PipelineConfigF64 = PipelineConfig<f64>;
pub type ScenarioF64 = Scenario<f64>;
