//! Detection data model and the line-delimited JSON stream reader.
//!
//! Each input line is one detection:
//!
//! ```text
//! {"frame": 12, "class": "vehicle", "x": 310.5, "y": 200.0, "w": 40, "h": 20, "conf": 0.91, "hist": [48 floats]}
//! ```
//!
//! `x`/`y` are box centers in pixels, origin top-left. `hist` is optional.
//! Records whose class is not one of `vehicle`, `pedestrian` or `bicycle`
//! are dropped and counted; records violating a box or histogram invariant
//! are dropped and counted as invalid. Unparsable lines and frame-index
//! regressions are hard errors carrying the line number.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Three channels of 16 bins each, concatenated.
pub const DEFAULT_HISTOGRAM_BINS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Vehicle,
    Pedestrian,
    Bicycle,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [
        ClassLabel::Vehicle,
        ClassLabel::Pedestrian,
        ClassLabel::Bicycle,
    ];

    /// Accepts the three road-user labels, case-insensitively. Anything else is `None`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vehicle" => Some(ClassLabel::Vehicle),
            "pedestrian" => Some(ClassLabel::Pedestrian),
            "bicycle" => Some(ClassLabel::Bicycle),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Vehicle => "vehicle",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Bicycle => "bicycle",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned box in pixels, stored by center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box from `(x_min, y_min, x_max, y_max)`.
    pub fn from_corners(x_min: T, y_min: T, x_max: T, y_max: T) -> Self {
        let w = x_max - x_min;
        let h = y_max - y_min;
        Self {
            x: x_min + w * T::half(),
            y: y_min + h * T::half(),
            w,
            h,
        }
    }

    /// `(x_min, y_min, x_max, y_max)`
    pub fn corners(&self) -> (T, T, T, T) {
        let hw = self.w * T::half();
        let hh = self.h * T::half();
        (self.x - hw, self.y - hh, self.x + hw, self.y + hh)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn diagonal(&self) -> T {
        self.w.hypot(self.h)
    }

    pub fn center(&self) -> (T, T) {
        (self.x, self.y)
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let (ax0, ay0, ax1, ay1) = self.corners();
        let (bx0, by0, bx1, by1) = other.corners();
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(T::zero());
        let ih = (ay1.min(by1) - ay0.max(by0)).max(T::zero());
        iw * ih
    }

    /// Intersection over union, 0 for disjoint or degenerate boxes.
    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union > T::zero() {
            inter / union
        } else {
            T::zero()
        }
    }

    pub fn center_distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }
}

/// Color histogram used by the appearance term of the association cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppearanceHistogram<T> {
    pub bins: Vec<T>,
}

impl<T: Scalar> AppearanceHistogram<T> {
    pub fn new(bins: Vec<T>) -> Self {
        Self { bins }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Mean bin value (the H-bar of the correlation formula).
    pub fn mean(&self) -> T {
        if self.bins.is_empty() {
            return T::zero();
        }
        self.bins.iter().copied().sum::<T>() / T::from_usize(self.bins.len())
    }

    /// In-place exponential smoothing: `self = keep * self + (1 - keep) * other`.
    pub fn blend(&mut self, other: &Self, keep: T) {
        if other.bins.len() != self.bins.len() {
            return;
        }
        let take = T::one() - keep;
        for (a, &b) in self.bins.iter_mut().zip(&other.bins) {
            *a = keep * *a + take * b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub frame: u64,
    pub class: ClassLabel,
    pub bbox: BoundingBox<T>,
    pub confidence: T,
    pub histogram: Option<AppearanceHistogram<T>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDetections<T> {
    pub frame: u64,
    pub detections: Vec<Detection<T>>,
}

impl<T> FrameDetections<T> {
    pub fn empty(frame: u64) -> Self {
        Self {
            frame,
            detections: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// First broken invariant of a detection.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("box values finite")]
    NonFinite,
    #[error("w > 0")]
    Width,
    #[error("h > 0")]
    Height,
    #[error("x >= 0")]
    NegativeX,
    #[error("y >= 0")]
    NegativeY,
    #[error("confidence in [0, 1]")]
    Confidence,
    #[error("histogram length {expected}")]
    HistogramLength { expected: usize },
    #[error("histogram bins >= 0")]
    HistogramNegative,
    #[error("histogram has a positive bin")]
    HistogramAllZero,
}

/// Checks box, confidence and histogram invariants against the default 48-bin layout.
pub fn validate_detection<T: Scalar>(d: &Detection<T>) -> std::result::Result<(), Violation> {
    validate_detection_with(d, DEFAULT_HISTOGRAM_BINS)
}

pub fn validate_detection_with<T: Scalar>(
    d: &Detection<T>,
    histogram_bins: usize,
) -> std::result::Result<(), Violation> {
    let b = &d.bbox;
    if !b.is_finite() || !d.confidence.is_finite() {
        return Err(Violation::NonFinite);
    }
    if b.w <= T::zero() {
        return Err(Violation::Width);
    }
    if b.h <= T::zero() {
        return Err(Violation::Height);
    }
    if b.x < T::zero() {
        return Err(Violation::NegativeX);
    }
    if b.y < T::zero() {
        return Err(Violation::NegativeY);
    }
    if d.confidence < T::zero() || d.confidence > T::one() {
        return Err(Violation::Confidence);
    }
    if let Some(h) = &d.histogram {
        if h.len() != histogram_bins {
            return Err(Violation::HistogramLength {
                expected: histogram_bins,
            });
        }
        if h.bins.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Violation::HistogramNegative);
        }
        if h.bins.iter().all(|v| *v == T::zero()) {
            return Err(Violation::HistogramAllZero);
        }
    }
    Ok(())
}

/// On-the-wire shape of one stream line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct DetectionRecord<T> {
    pub frame: u64,
    pub class: String,
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
    #[serde(default = "full_confidence")]
    pub conf: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist: Option<Vec<T>>,
}

fn full_confidence<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> From<&Detection<T>> for DetectionRecord<T> {
    fn from(d: &Detection<T>) -> Self {
        Self {
            frame: d.frame,
            class: d.class.as_str().to_string(),
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            conf: d.confidence,
            hist: d.histogram.as_ref().map(|h| h.bins.clone()),
        }
    }
}

impl<T: Scalar> DetectionRecord<T> {
    /// `None` when the class is not a tracked road-user label.
    pub fn into_detection(self) -> Option<Detection<T>> {
        let class = ClassLabel::parse(&self.class)?;
        Some(Detection {
            frame: self.frame,
            class,
            bbox: BoundingBox::new(self.x, self.y, self.w, self.h),
            confidence: self.conf,
            // An explicitly empty list means "no histogram".
            histogram: self
                .hist
                .filter(|h| !h.is_empty())
                .map(AppearanceHistogram::new),
        })
    }
}

/// Writes one detection as a single JSON line.
pub fn write_detection<T: Scalar, W: Write>(out: &mut W, d: &Detection<T>) -> Result<()> {
    serde_json::to_writer(&mut *out, &DetectionRecord::from(d))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes every detection of every frame, in order.
pub fn write_stream<'a, T: Scalar, W: Write>(
    out: &mut W,
    frames: impl IntoIterator<Item = &'a FrameDetections<T>>,
) -> Result<()> {
    for frame in frames {
        for d in &frame.detections {
            write_detection(out, d)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions<T> {
    pub histogram_bins: usize,
    /// Detections below this confidence are dropped (counted separately).
    pub min_confidence: T,
}

impl<T: Scalar> Default for ReadOptions<T> {
    fn default() -> Self {
        Self {
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            min_confidence: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReadStats {
    pub lines: usize,
    pub kept: usize,
    pub dropped_unknown_class: usize,
    pub dropped_invalid: usize,
    pub dropped_low_confidence: usize,
}

impl ReadStats {
    pub fn dropped(&self) -> usize {
        self.dropped_unknown_class + self.dropped_invalid + self.dropped_low_confidence
    }
}

/// Sequential reader grouping stream lines into [`FrameDetections`].
///
/// Yields frames in strictly increasing order. Frames whose records were all
/// dropped are skipped.
pub struct DetectionReader<R, T> {
    lines: std::io::Lines<R>,
    line_no: usize,
    pending: Option<FrameDetections<T>>,
    last_frame: Option<u64>,
    options: ReadOptions<T>,
    stats: ReadStats,
    finished: bool,
}

impl<R: BufRead, T: Scalar> DetectionReader<R, T> {
    pub fn new(source: R) -> Self {
        Self::with_options(source, ReadOptions::default())
    }

    pub fn with_options(source: R, options: ReadOptions<T>) -> Self {
        Self {
            lines: source.lines(),
            line_no: 0,
            pending: None,
            last_frame: None,
            options,
            stats: ReadStats::default(),
            finished: false,
        }
    }

    pub fn stats(&self) -> ReadStats {
        self.stats
    }

    fn parse_line(&mut self, line: &str) -> Result<Option<Detection<T>>> {
        let record: DetectionRecord<T> = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: self.line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = self.last_frame {
            if record.frame < prev {
                return Err(Error::FrameRegression {
                    line: self.line_no,
                    frame: record.frame,
                    previous: prev,
                });
            }
        }
        self.last_frame = Some(record.frame);

        let Some(det) = record.into_detection() else {
            self.stats.dropped_unknown_class += 1;
            return Ok(None);
        };
        if let Err(v) = validate_detection_with(&det, self.options.histogram_bins) {
            log::debug!("line {}: dropping detection ({v})", self.line_no);
            self.stats.dropped_invalid += 1;
            return Ok(None);
        }
        if det.confidence < self.options.min_confidence {
            self.stats.dropped_low_confidence += 1;
            return Ok(None);
        }
        self.stats.kept += 1;
        Ok(Some(det))
    }
}

impl<R: BufRead, T: Scalar> Iterator for DetectionReader<R, T> {
    type Item = Result<FrameDetections<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            let line = match self.lines.next() {
                Some(Ok(line)) => line,
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(e.into()));
                }
                None => {
                    self.finished = true;
                    return self.pending.take().map(Ok);
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            self.stats.lines += 1;
            let det = match self.parse_line(&line) {
                Ok(Some(det)) => det,
                Ok(None) => continue,
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            };
            match &mut self.pending {
                Some(p) if p.frame == det.frame => p.detections.push(det),
                _ => {
                    let frame = det.frame;
                    let done = self.pending.replace(FrameDetections {
                        frame,
                        detections: vec![det],
                    });
                    if let Some(done) = done {
                        return Some(Ok(done));
                    }
                }
            }
        }
    }
}

/// Reads a whole stream into memory, returning the frames and drop counters.
pub fn read_stream<R: BufRead, T: Scalar>(
    source: R,
    options: ReadOptions<T>,
) -> Result<(Vec<FrameDetections<T>>, ReadStats)> {
    let mut reader = DetectionReader::with_options(source, options);
    let frames = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((frames, reader.stats()))
}
