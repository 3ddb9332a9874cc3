//! End-to-end per-stream pipeline: ingest → track → speed → conflicts.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::conflict::{ConflictConfig, ConflictDetector, ConflictEvent, SpeedSeries};
use crate::error::{Error, Result};
use crate::geometry::{estimate_speed, Homography, MotionConfig};
use crate::ingest::{
    BoundingBox, ClassLabel, DetectionReader, FrameDetections, ReadOptions, ReadStats,
    DEFAULT_HISTOGRAM_BINS,
};
use crate::scalar::Scalar;
use crate::tracker::{StepReport, TrackId, TrackStatus, Tracker, TrackerConfig};

/// Every tunable of a pipeline run. Unknown keys are rejected on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct PipelineConfig<T> {
    pub tracker: TrackerConfig<T>,
    pub motion: MotionConfig<T>,
    pub conflict: ConflictConfig<T>,
    /// Calibration file (`{"H": [...]}` or `{"points": [...]}`).
    pub calibration: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub min_confidence: T,
    pub histogram_bins: usize,
    /// Frames the ingest stage may run ahead of tracking.
    pub queue_capacity: usize,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            motion: MotionConfig::default(),
            conflict: ConflictConfig::default(),
            calibration: None,
            input: None,
            output: None,
            seed: 0,
            min_confidence: T::zero(),
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            queue_capacity: 64,
        }
    }
}

impl<T: Scalar> PipelineConfig<T> {
    /// Numeric constraints plus existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.motion.validate()?;
        self.conflict.validate()?;
        if self.tracker.history_capacity < self.motion.window {
            return Err(Error::Config(format!(
                "tracker.history_capacity ({}) must be >= motion.window ({})",
                self.tracker.history_capacity, self.motion.window
            )));
        }
        if !(self.min_confidence >= T::zero() && self.min_confidence <= T::one()) {
            return Err(Error::Config("min_confidence must lie in [0, 1]".into()));
        }
        if self.histogram_bins == 0 || self.queue_capacity == 0 {
            return Err(Error::Config(
                "histogram_bins and queue_capacity must be > 0".into(),
            ));
        }
        for (key, path) in [("calibration", &self.calibration), ("input", &self.input)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{key} file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn read_options(&self) -> ReadOptions<T> {
        ReadOptions {
            histogram_bins: self.histogram_bins,
            min_confidence: self.min_confidence,
        }
    }
}

/// One row of the track dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSnapshot<T> {
    pub frame: u64,
    pub id: TrackId,
    pub class: ClassLabel,
    pub bbox: BoundingBox<T>,
    pub status: TrackStatus,
}

impl<T: Scalar> TrackSnapshot<T> {
    /// `frame,id,class,x,y,w,h,status`
    pub fn to_csv_line(&self) -> String {
        let b = &self.bbox;
        format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            self.frame,
            self.id,
            self.class,
            b.x.to_f64_lossy(),
            b.y.to_f64_lossy(),
            b.w.to_f64_lossy(),
            b.h.to_f64_lossy(),
            self.status.as_str()
        )
    }
}

pub const TRACK_DUMP_HEADER: &str = "frame,id,class,x,y,w,h,status";

/// Result of processing one frame index.
#[derive(Debug, Clone)]
pub struct FrameOutput<T> {
    pub frame: u64,
    pub report: StepReport<T>,
    pub events: Vec<ConflictEvent<T>>,
}

pub struct Pipeline<T> {
    tracker: Tracker<T>,
    detector: ConflictDetector<T>,
    motion: MotionConfig<T>,
    homography: Homography<T>,
    speeds: HashMap<TrackId, SpeedSeries<T>>,
    frames_processed: u64,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(config: &PipelineConfig<T>, homography: Homography<T>) -> Result<Self> {
        config.motion.validate()?;
        Ok(Self {
            tracker: Tracker::new(config.tracker)?,
            detector: ConflictDetector::new(config.conflict, config.motion.window)?,
            motion: config.motion,
            homography,
            speeds: HashMap::new(),
            frames_processed: 0,
        })
    }

    pub fn tracker(&self) -> &Tracker<T> {
        &self.tracker
    }

    pub fn speeds(&self) -> &HashMap<TrackId, SpeedSeries<T>> {
        &self.speeds
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    /// Live tracks as dump rows.
    pub fn snapshot(&self, frame: u64) -> Vec<TrackSnapshot<T>> {
        self.tracker
            .tracks()
            .iter()
            .map(|t| TrackSnapshot {
                frame,
                id: t.id,
                class: t.class,
                bbox: t.bbox(),
                status: t.status,
            })
            .collect()
    }

    /// Processes `frame`, first stepping through any skipped frame indices
    /// with no detections. `on_frame` sees every processed frame in order.
    pub fn process(
        &mut self,
        frame: &FrameDetections<T>,
        mut on_frame: impl FnMut(&Self, FrameOutput<T>) -> Result<()>,
    ) -> Result<()> {
        if let Some(prev) = self.tracker.last_frame() {
            if frame.frame <= prev {
                return Err(Error::OutOfOrderFrame {
                    frame: frame.frame,
                    previous: prev,
                });
            }
            for skipped in (prev + 1)..frame.frame {
                let out = self.process_one(&FrameDetections::empty(skipped))?;
                on_frame(self, out)?;
            }
        }
        let out = self.process_one(frame)?;
        on_frame(self, out)
    }

    fn process_one(&mut self, frame: &FrameDetections<T>) -> Result<FrameOutput<T>> {
        let report = self.tracker.step(frame)?;
        self.frames_processed += 1;
        for id in &report.deleted {
            self.speeds.remove(id);
            self.detector.forget(*id);
        }
        for t in self.tracker.tracks() {
            if t.history.len() < self.motion.window {
                continue;
            }
            match estimate_speed(t, &self.homography, &self.motion) {
                Ok(est) => self
                    .speeds
                    .entry(t.id)
                    .or_insert_with(|| SpeedSeries::new(self.motion.window))
                    .push(frame.frame, est),
                Err(e) => log::debug!("frame {}: no speed for track {}: {e}", frame.frame, t.id),
            }
        }
        let events = self.detector.detect(
            frame.frame,
            self.tracker.tracks(),
            &self.speeds,
            &self.homography,
        );
        Ok(FrameOutput {
            frame: frame.frame,
            report,
            events,
        })
    }

    /// Runs in-memory frames and collects every event.
    pub fn run_frames<'a>(
        &mut self,
        frames: impl IntoIterator<Item = &'a FrameDetections<T>>,
    ) -> Result<Vec<ConflictEvent<T>>> {
        let mut events = Vec::new();
        for f in frames {
            self.process(f, |_, out| {
                events.extend(out.events);
                Ok(())
            })?;
        }
        Ok(events)
    }

    /// Streams a detection source through the pipeline.
    ///
    /// Parsing runs on its own thread, at most `queue_capacity` frames ahead
    /// of tracking; frame order is preserved.
    pub fn run_stream<R: BufRead + Send>(
        &mut self,
        source: R,
        options: ReadOptions<T>,
        queue_capacity: usize,
        mut on_frame: impl FnMut(&Self, FrameOutput<T>) -> Result<()>,
    ) -> Result<ReadStats> {
        std::thread::scope(|scope| {
            let (tx, rx) = mpsc::sync_channel::<Result<FrameDetections<T>>>(queue_capacity.max(1));
            let reader = scope.spawn(move || {
                let mut reader = DetectionReader::with_options(source, options);
                for item in reader.by_ref() {
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        break;
                    }
                }
                reader.stats()
            });
            let mut outcome = Ok(());
            for item in rx.iter() {
                match item.and_then(|frame| self.process(&frame, &mut on_frame)) {
                    Ok(()) => {}
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                }
            }
            // Dropping the receiver unblocks the reader if we stopped early.
            drop(rx);
            let stats = reader.join().expect("reader thread panicked");
            outcome.map(|_| stats)
        })
    }
}

/// Totals of a [`run_detect`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectSummary {
    pub stats: ReadStats,
    pub frames: u64,
    pub events: usize,
}

/// Streams `source` through a fresh pipeline and writes every conflict as
/// one JSON line to `out`, flushing after each frame that produced events.
pub fn run_detect<T: Scalar, R: BufRead + Send, W: Write>(
    config: &PipelineConfig<T>,
    homography: Homography<T>,
    source: R,
    out: &mut W,
) -> Result<DetectSummary> {
    let mut pipeline = Pipeline::new(config, homography)?;
    let mut events = 0;
    let stats = pipeline.run_stream(
        source,
        config.read_options(),
        config.queue_capacity,
        |_, frame| {
            for ev in &frame.events {
                serde_json::to_writer(&mut *out, ev)?;
                out.write_all(b"\n")?;
            }
            if !frame.events.is_empty() {
                out.flush()?;
                events += frame.events.len();
            }
            Ok(())
        },
    )?;
    Ok(DetectSummary {
        stats,
        frames: pipeline.frames_processed(),
        events,
    })
}
