//! Dissimilarity terms between a track and a detection.
//!
//! Every term lies in `[0, 1]`; the association cost is their weighted sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AppearanceHistogram, BoundingBox};
use crate::scalar::Scalar;

/// Appearance term together with a flag for the degenerate case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppearanceCost<T> {
    pub value: T,
    /// Set when either histogram has zero variance (or the lengths differ);
    /// `value` is then the neutral 0.5.
    pub degenerate: bool,
}

/// One minus the Pearson correlation of two histograms, clamped to `[0, 1]`.
pub fn appearance_cost<T: Scalar>(
    h1: &AppearanceHistogram<T>,
    h2: &AppearanceHistogram<T>,
) -> AppearanceCost<T> {
    match (CenteredHistogram::new(h1), CenteredHistogram::new(h2)) {
        (Some(a), Some(b)) if a.len() == b.len() => AppearanceCost {
            value: a.cost(&b),
            degenerate: false,
        },
        _ => AppearanceCost {
            value: T::half(),
            degenerate: true,
        },
    }
}

/// Mean-subtracted, unit-norm histogram; correlation becomes a dot product.
#[derive(Debug, Clone)]
pub struct CenteredHistogram<T> {
    unit: Vec<T>,
}

impl<T: Scalar> CenteredHistogram<T> {
    /// `None` for empty or zero-variance histograms.
    pub fn new(h: &AppearanceHistogram<T>) -> Option<Self> {
        if h.is_empty() {
            return None;
        }
        let mean = h.mean();
        let centered: Vec<T> = h.bins.iter().map(|&b| b - mean).collect();
        let norm = centered.iter().map(|&c| c * c).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return None;
        }
        Some(Self {
            unit: centered.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    pub fn correlation(&self, other: &Self) -> T {
        self.unit
            .iter()
            .zip(&other.unit)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn cost(&self, other: &Self) -> T {
        (T::one() - self.correlation(other))
            .max(T::zero())
            .min(T::one())
    }
}

/// `½(|h1−h2|/(h1+h2) + |w1−w2|/(w1+w2))`
pub fn size_cost<T: Scalar>(b1: &BoundingBox<T>, b2: &BoundingBox<T>) -> T {
    T::half() * (ratio(b1.h, b2.h) + ratio(b1.w, b2.w))
}

/// `½(|x1−x2|/(x1+x2) + |y1−y2|/(y1+y2))`; an axis with zero denominator contributes 0.
pub fn position_cost<T: Scalar>(b1: &BoundingBox<T>, b2: &BoundingBox<T>) -> T {
    T::half() * (ratio(b1.x, b2.x) + ratio(b1.y, b2.y))
}

#[inline]
fn ratio<T: Scalar>(a: T, b: T) -> T {
    let den = a + b;
    if den > T::zero() {
        ((a - b).abs() / den).min(T::one())
    } else {
        T::zero()
    }
}

/// Jaccard distance `1 − IOU`.
pub fn jaccard_cost<T: Scalar>(b1: &BoundingBox<T>, b2: &BoundingBox<T>) -> T {
    (T::one() - b1.iou(b2)).max(T::zero()).min(T::one())
}

/// Non-negative weights of the appearance, size, position and Jaccard terms.
///
/// Always normalized to sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights<T>", into = "RawWeights<T>")]
#[serde(bound = "T: Scalar")]
pub struct CostWeights<T> {
    appearance: T,
    size: T,
    position: T,
    jaccard: T,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights<T> {
    appearance: T,
    size: T,
    position: T,
    jaccard: T,
}

impl<T: Scalar> TryFrom<RawWeights<T>> for CostWeights<T> {
    type Error = Error;
    fn try_from(r: RawWeights<T>) -> Result<Self> {
        CostWeights::new(r.appearance, r.size, r.position, r.jaccard)
    }
}

impl<T: Scalar> From<CostWeights<T>> for RawWeights<T> {
    fn from(w: CostWeights<T>) -> Self {
        RawWeights {
            appearance: w.appearance,
            size: w.size,
            position: w.position,
            jaccard: w.jaccard,
        }
    }
}

impl<T: Scalar> Default for CostWeights<T> {
    fn default() -> Self {
        let q = T::lit(0.25);
        Self {
            appearance: q,
            size: q,
            position: q,
            jaccard: q,
        }
    }
}

impl<T: Scalar> CostWeights<T> {
    pub fn new(appearance: T, size: T, position: T, jaccard: T) -> Result<Self> {
        let all = [appearance, size, position, jaccard];
        if all.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::Config("cost weights must be finite and >= 0".into()));
        }
        let sum: T = all.iter().copied().sum();
        if !(sum > T::zero()) {
            return Err(Error::Config("cost weights must not all be zero".into()));
        }
        Ok(Self {
            appearance: appearance / sum,
            size: size / sum,
            position: position / sum,
            jaccard: jaccard / sum,
        })
    }

    /// `(appearance, size, position, jaccard)`
    pub fn as_tuple(&self) -> (T, T, T, T) {
        (self.appearance, self.size, self.position, self.jaccard)
    }

    /// Weights actually applied. Without an appearance term, its weight is
    /// spread over the other three in proportion to their size.
    pub fn effective(&self, with_appearance: bool) -> (T, T, T, T) {
        if with_appearance {
            return self.as_tuple();
        }
        let rest = self.size + self.position + self.jaccard;
        if rest > T::zero() {
            (
                T::zero(),
                self.size / rest,
                self.position / rest,
                self.jaccard / rest,
            )
        } else {
            // Appearance-only weights and no histogram: fall back to equal geometry terms.
            let third = T::one() / T::lit(3.0);
            (T::zero(), third, third, third)
        }
    }
}

/// Individual terms of one track/detection comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms<T> {
    /// `None` when either side has no usable histogram.
    pub appearance: Option<T>,
    pub size: T,
    pub position: T,
    pub jaccard: T,
}

impl<T: Scalar> CostTerms<T> {
    pub fn compute(
        track_box: &BoundingBox<T>,
        track_hist: Option<&CenteredHistogram<T>>,
        det_box: &BoundingBox<T>,
        det_hist: Option<&CenteredHistogram<T>>,
    ) -> Self {
        let appearance = match (track_hist, det_hist) {
            (Some(a), Some(b)) if a.len() == b.len() => Some(a.cost(b)),
            _ => None,
        };
        Self {
            appearance,
            size: size_cost(track_box, det_box),
            position: position_cost(track_box, det_box),
            jaccard: jaccard_cost(track_box, det_box),
        }
    }

    pub fn weighted(&self, w: &CostWeights<T>) -> T {
        let (wa, ws, wp, wk) = w.effective(self.appearance.is_some());
        wa * self.appearance.unwrap_or(T::zero())
            + ws * self.size
            + wp * self.position
            + wk * self.jaccard
    }
}

/// Weighted four-term cost of matching a track box/histogram to a detection.
///
/// The track box is the one reconstructed from the predicted Kalman state.
pub fn total_cost<T: Scalar>(
    track_box: &BoundingBox<T>,
    track_hist: Option<&AppearanceHistogram<T>>,
    det_box: &BoundingBox<T>,
    det_hist: Option<&AppearanceHistogram<T>>,
    w: &CostWeights<T>,
) -> T {
    let a = track_hist.and_then(CenteredHistogram::new);
    let b = det_hist.and_then(CenteredHistogram::new);
    CostTerms::compute(track_box, a.as_ref(), det_box, b.as_ref()).weighted(w)
}
