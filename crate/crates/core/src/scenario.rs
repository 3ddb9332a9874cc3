//! Scripted synthetic scenes with labelled conflict ground truth.
//!
//! Actors move piecewise-linearly between waypoints; rendering applies
//! per-frame jitter and dropout from a seeded ChaCha stream, so the output
//! is a pure function of `(actors, duration, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conflict::ConflictType;
use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, Homography};
use crate::ingest::{
    AppearanceHistogram, BoundingBox, ClassLabel, Detection, FrameDetections,
    DEFAULT_HISTOGRAM_BINS,
};
use crate::scalar::Scalar;

/// Scale of the synthetic world.
pub const PIXELS_PER_METER: f64 = 10.0;

/// Calibration of every synthetic scene: 10 px per meter, image origin at (0°, 0°).
pub fn synthetic_homography<T: Scalar>() -> Homography<T> {
    Homography::scaled(
        T::lit(PIXELS_PER_METER),
        GeoPoint {
            lat: T::zero(),
            lon: T::zero(),
        },
    )
    .expect("synthetic calibration is invertible")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct ScriptedActor<T> {
    pub class: ClassLabel,
    /// `(frame, x, y)` box centers; frames strictly increasing.
    pub waypoints: Vec<(u64, T, T)>,
    /// `(w, h)` in pixels.
    pub size: (T, T),
    pub histogram_seed: u64,
    /// Per-frame probability of a missed detection.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Half-width of the uniform position noise, pixels.
    #[serde(default = "default_jitter")]
    pub jitter: T,
    /// Inclusive frame ranges with no detections (scripted occlusions).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hidden: Vec<(u64, u64)>,
}

fn default_dropout() -> f64 {
    0.05
}

fn default_jitter<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> ScriptedActor<T> {
    pub fn new(class: ClassLabel, size: (f64, f64), histogram_seed: u64) -> Self {
        Self {
            class,
            waypoints: Vec::new(),
            size: (T::lit(size.0), T::lit(size.1)),
            histogram_seed,
            dropout: default_dropout(),
            jitter: T::one(),
            hidden: Vec::new(),
        }
    }

    pub fn at(mut self, frame: u64, x: f64, y: f64) -> Self {
        self.waypoints.push((frame, T::lit(x), T::lit(y)));
        self
    }

    pub fn hide(mut self, from: u64, to: u64) -> Self {
        self.hidden.push((from, to));
        self
    }

    pub fn noise(mut self, dropout: f64, jitter: f64) -> Self {
        self.dropout = dropout;
        self.jitter = T::lit(jitter);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Scenario("actor has no waypoints".into()));
        }
        if self.waypoints.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Scenario(
                "waypoint frames must be strictly increasing".into(),
            ));
        }
        if !(self.size.0 > T::zero() && self.size.1 > T::zero()) {
            return Err(Error::Scenario("actor size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Scenario("dropout must lie in [0, 1]".into()));
        }
        if !(self.jitter >= T::zero()) {
            return Err(Error::Scenario("jitter must be >= 0".into()));
        }
        if self.hidden.iter().any(|(a, b)| a > b) {
            return Err(Error::Scenario(
                "hidden ranges must satisfy start <= end".into(),
            ));
        }
        Ok(())
    }

    /// Interpolated center at `frame`, `None` outside the waypoint span.
    pub fn position(&self, frame: u64) -> Option<(T, T)> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if frame < first.0 || frame > last.0 {
            return None;
        }
        for w in self.waypoints.windows(2) {
            let ((f0, x0, y0), (f1, x1, y1)) = (w[0], w[1]);
            if frame >= f0 && frame <= f1 {
                let t = T::from_usize((frame - f0) as usize) / T::from_usize((f1 - f0) as usize);
                return Some((x0 + (x1 - x0) * t, y0 + (y1 - y0) * t));
            }
        }
        Some((first.1, first.2))
    }

    fn is_hidden(&self, frame: u64) -> bool {
        self.hidden.iter().any(|&(a, b)| frame >= a && frame <= b)
    }
}

/// Base appearance of an actor: one Gaussian bump per 16-bin channel.
///
/// Peak bins are `(5s, 7s + 3, 11s + 7) mod 16` for seed `s`, so two seeds
/// that differ mod 16 peak in different bins on every channel.
pub fn actor_histogram(seed: u64) -> Vec<f64> {
    const PER_CHANNEL: usize = DEFAULT_HISTOGRAM_BINS / 3;
    let peaks = [(seed * 5) % 16, (seed * 7 + 3) % 16, (seed * 11 + 7) % 16];
    let mut bins = Vec::with_capacity(DEFAULT_HISTOGRAM_BINS);
    for peak in peaks {
        for b in 0..PER_CHANNEL {
            let d = b as f64 - peak as f64;
            bins.push(1.0 + 200.0 * (-0.5 * d * d).exp());
        }
    }
    bins
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthEvent {
    /// Inclusive frame range of the conflict.
    pub start: u64,
    pub end: u64,
    #[serde(rename = "type")]
    pub conflict_type: ConflictType,
    /// Actor indices.
    pub participants: (usize, usize),
}

/// A named, self-contained scene description (the scenario file format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Scenario<T> {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub duration: u64,
    pub actors: Vec<ScriptedActor<T>>,
    #[serde(default)]
    pub truth: Vec<GroundTruthEvent>,
}

/// Ground truth written next to a rendered stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthManifest {
    pub scenario: String,
    pub duration: u64,
    pub seed: u64,
    pub events: Vec<GroundTruthEvent>,
}

/// A rendered detection stream plus the actor behind every detection.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedStream<T> {
    pub frames: Vec<FrameDetections<T>>,
    /// `actors[f][k]` is the actor index of `frames[f].detections[k]`.
    pub actors: Vec<Vec<usize>>,
}

impl<T: Scalar> RenderedStream<T> {
    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(FrameDetections::len).sum()
    }
}

fn round_to<T: Scalar>(v: T, step: f64) -> T {
    (v / T::lit(step)).round() * T::lit(step)
}

/// Renders actors over frames `0..duration`.
pub fn render<T: Scalar>(
    actors: &[ScriptedActor<T>],
    duration: u64,
    seed: u64,
) -> Result<RenderedStream<T>> {
    for a in actors {
        a.validate()?;
    }
    let bases: Vec<Vec<f64>> = actors
        .iter()
        .map(|a| actor_histogram(a.histogram_seed))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    let mut owners = Vec::new();
    for frame in 0..duration {
        let mut dets = Vec::new();
        let mut who = Vec::new();
        for (idx, actor) in actors.iter().enumerate() {
            let Some((x, y)) = actor.position(frame) else {
                continue;
            };
            // Draw the same amount of randomness whether or not the actor is seen.
            let miss = rng.gen::<f64>() < actor.dropout;
            let jx = T::lit(rng.gen_range(-1.0..=1.0)) * actor.jitter;
            let jy = T::lit(rng.gen_range(-1.0..=1.0)) * actor.jitter;
            let confidence = rng.gen_range(0.5..0.99);
            let hist: Vec<T> = bases[idx]
                .iter()
                .map(|&b| round_to(T::lit(b * (1.0 + rng.gen_range(-0.05..=0.05))), 0.01))
                .collect();
            if miss || actor.is_hidden(frame) {
                continue;
            }
            let cx = round_to((x + jx).max(T::zero()), 0.01);
            let cy = round_to((y + jy).max(T::zero()), 0.01);
            dets.push(Detection {
                frame,
                class: actor.class,
                bbox: BoundingBox::new(cx, cy, actor.size.0, actor.size.1),
                confidence: round_to(T::lit(confidence), 0.001),
                histogram: Some(AppearanceHistogram::new(hist)),
            });
            who.push(idx);
        }
        if !dets.is_empty() {
            frames.push(FrameDetections {
                frame,
                detections: dets,
            });
            owners.push(who);
        }
    }
    Ok(RenderedStream {
        frames,
        actors: owners,
    })
}

impl<T: Scalar> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::Scenario(format!(
                "{}: duration must be > 0",
                self.name
            )));
        }
        for (i, a) in self.actors.iter().enumerate() {
            a.validate()
                .map_err(|e| Error::Scenario(format!("{}: actor {i}: {e}", self.name)))?;
        }
        for (i, t) in self.truth.iter().enumerate() {
            if t.start > t.end || t.end >= self.duration {
                return Err(Error::Scenario(format!(
                    "{}: truth event {i}: frame range outside scenario duration",
                    self.name
                )));
            }
            let (a, b) = t.participants;
            if a == b || a >= self.actors.len() || b >= self.actors.len() {
                return Err(Error::Scenario(format!(
                    "{}: truth event {i}: invalid participants",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn render(&self, seed: u64) -> Result<RenderedStream<T>> {
        self.validate()?;
        render(&self.actors, self.duration, seed)
    }

    pub fn manifest(&self, seed: u64) -> TruthManifest {
        TruthManifest {
            scenario: self.name.clone(),
            duration: self.duration,
            seed,
            events: self.truth.clone(),
        }
    }

    pub fn is_conflict(&self) -> bool {
        !self.truth.is_empty()
    }
}

// Nominal speeds in px/frame at 10 px/m and 30 fps.
const VEHICLE: (f64, f64) = (40.0, 20.0);
const VEHICLE_NS: (f64, f64) = (20.0, 40.0);
const BICYCLE: (f64, f64) = (10.0, 20.0);
const PEDESTRIAN: (f64, f64) = (8.0, 16.0);

fn truth(
    start: u64,
    end: u64,
    conflict_type: ConflictType,
    a: usize,
    b: usize,
) -> GroundTruthEvent {
    GroundTruthEvent {
        start,
        end,
        conflict_type,
        participants: (a, b),
    }
}

fn scenario<T: Scalar>(
    name: &str,
    description: &str,
    duration: u64,
    actors: Vec<ScriptedActor<T>>,
    truth: Vec<GroundTruthEvent>,
) -> Scenario<T> {
    Scenario {
        name: name.to_string(),
        description: description.to_string(),
        duration,
        actors,
        truth,
    }
}

/// The bundled regression scenes: conflicts of every type plus look-alike
/// situations that must stay quiet.
pub fn builtin_suite<T: Scalar>() -> Vec<Scenario<T>> {
    use ClassLabel::*;
    use ConflictType::*;
    let v = |seed| ScriptedActor::<T>::new(Vehicle, VEHICLE, seed);
    let v_ns = |seed| ScriptedActor::<T>::new(Vehicle, VEHICLE_NS, seed);

    vec![
        scenario(
            "v2v_right_angle",
            "eastbound and southbound vehicles collide in the box and stop overlapping",
            240,
            vec![
                v(1).at(0, 100.0, 360.0)
                    .at(140, 618.0, 360.0)
                    .at(239, 618.0, 360.0),
                v_ns(2)
                    .at(60, 640.0, 49.0)
                    .at(140, 640.0, 345.0)
                    .at(239, 640.0, 345.0),
            ],
            vec![truth(140, 200, V2V, 0, 1)],
        ),
        scenario(
            "v2v_near_miss",
            "two vehicles brake hard at right angles and stop just short of each other",
            240,
            vec![
                v(3).at(0, 100.0, 360.0)
                    .at(140, 595.0, 360.0)
                    .at(239, 595.0, 360.0),
                v_ns(4)
                    .at(60, 640.0, 40.0)
                    .at(140, 640.0, 325.0)
                    .at(239, 640.0, 325.0),
            ],
            vec![truth(140, 200, V2V, 0, 1)],
        ),
        scenario(
            "v2b_conflict",
            "a vehicle and a crossing cyclist both brake to a stop next to each other",
            240,
            vec![
                v(5).at(0, 100.0, 400.0)
                    .at(140, 600.0, 400.0)
                    .at(239, 600.0, 400.0),
                ScriptedActor::new(Bicycle, BICYCLE, 6)
                    .at(20, 635.0, 80.0)
                    .at(140, 635.0, 380.0)
                    .at(239, 635.0, 380.0),
            ],
            vec![truth(140, 200, V2B, 0, 1)],
        ),
        scenario(
            "v2p_crossing",
            "a vehicle stops abruptly in front of a pedestrian on the crosswalk",
            240,
            vec![
                v(7).at(0, 100.0, 360.0)
                    .at(140, 610.0, 360.0)
                    .at(239, 610.0, 360.0),
                ScriptedActor::new(Pedestrian, PEDESTRIAN, 8)
                    .at(0, 650.0, 440.0)
                    .at(239, 650.0, 308.5),
            ],
            vec![truth(140, 200, V2P, 0, 1)],
        ),
        scenario(
            "parallel_passing",
            "a faster vehicle overtakes in the adjacent lane",
            240,
            vec![
                v(9).at(0, 50.0, 340.0).at(239, 950.0, 340.0),
                v(10).at(0, 20.0, 380.0).at(239, 1150.0, 380.0),
            ],
            vec![],
        ),
        scenario(
            "queued_stop",
            "three vehicles queue at a red light while cross traffic clears the box",
            240,
            vec![
                v(11)
                    .at(0, 200.0, 360.0)
                    .at(90, 520.0, 360.0)
                    .at(239, 520.0, 360.0),
                v(12)
                    .at(0, 140.0, 360.0)
                    .at(100, 470.0, 360.0)
                    .at(239, 470.0, 360.0),
                v(13)
                    .at(0, 80.0, 360.0)
                    .at(110, 420.0, 360.0)
                    .at(239, 420.0, 360.0),
                v_ns(14).at(0, 700.0, 0.0).at(239, 700.0, 700.0),
            ],
            vec![],
        ),
        scenario(
            "occlusion_gap",
            "a vehicle disappears for eight frames behind an obstruction",
            240,
            vec![
                v(15)
                    .at(0, 60.0, 300.0)
                    .at(239, 940.0, 300.0)
                    .hide(100, 107),
                v(16).at(0, 1200.0, 420.0).at(239, 300.0, 420.0),
            ],
            vec![],
        ),
        scenario(
            "identity_crossing",
            "opposing vehicles whose boxes overlap while they pass",
            240,
            vec![
                v(17).at(0, 100.0, 356.0).at(239, 1000.0, 356.0),
                v(18).at(0, 1100.0, 364.0).at(239, 200.0, 364.0),
            ],
            vec![],
        ),
        scenario(
            "stalled_vehicle",
            "a broken-down vehicle is passed closely by moving traffic",
            240,
            vec![
                v(19).at(0, 600.0, 330.0).at(239, 600.0, 330.0),
                v(20).at(0, 50.0, 375.0).at(239, 950.0, 375.0),
            ],
            vec![],
        ),
        dense_scene(),
    ]
}

/// 42 vehicles in six lanes plus 8 pedestrians on two sidewalks, all
/// visible for 300 frames.
fn dense_scene<T: Scalar>() -> Scenario<T> {
    const LAST: u64 = 299;
    let mut actors = Vec::new();
    let mut seed = 100;
    let lanes = [
        (200.0, 3.5),
        (250.0, 4.0),
        (300.0, 4.5),
        (420.0, -3.5),
        (470.0, -4.0),
        (520.0, -4.5),
    ];
    for (y, speed) in lanes {
        for k in 0..7 {
            let x0 = if speed > 0.0 {
                20.0 + 150.0 * k as f64
            } else {
                1400.0 + 150.0 * k as f64
            };
            actors.push(
                ScriptedActor::new(ClassLabel::Vehicle, VEHICLE, seed)
                    .at(0, x0, y)
                    .at(LAST, x0 + speed * LAST as f64, y),
            );
            seed += 1;
        }
    }
    for (y, speed) in [(120.0, 0.5), (600.0, -0.5)] {
        for k in 0..4 {
            let x0 = if speed > 0.0 {
                100.0 + 250.0 * k as f64
            } else {
                300.0 + 250.0 * k as f64
            };
            actors.push(
                ScriptedActor::new(ClassLabel::Pedestrian, PEDESTRIAN, seed)
                    .at(0, x0, y)
                    .at(LAST, x0 + speed * LAST as f64, y),
            );
            seed += 1;
        }
    }
    scenario(
        "dense_throughput",
        "fifty road users in parallel lanes and sidewalks",
        LAST + 1,
        actors,
        vec![],
    )
}

/// Looks up a builtin scenario by name.
pub fn builtin<T: Scalar>(name: &str) -> Result<Scenario<T>> {
    let suite = builtin_suite::<T>();
    let names: Vec<_> = suite.iter().map(|s| s.name.clone()).collect();
    suite.into_iter().find(|s| s.name == name).ok_or_else(|| {
        Error::Scenario(format!(
            "unknown scenario '{name}'; available: {}",
            names.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_detection;

    #[test]
    fn noise_free_path_is_exact() {
        let a = ScriptedActor::<f64>::new(ClassLabel::Vehicle, VEHICLE, 1)
            .noise(0.0, 0.0)
            .at(0, 10.0, 20.0)
            .at(10, 110.0, 20.0);
        let r = render(&[a], 11, 7).unwrap();
        assert_eq!(r.frames.len(), 11);
        for (f, frame) in r.frames.iter().enumerate() {
            assert_eq!(frame.detections[0].bbox.x, 10.0 + 10.0 * f as f64);
            assert_eq!(frame.detections[0].bbox.y, 20.0);
        }
    }

    #[test]
    fn full_dropout_is_empty() {
        let a = ScriptedActor::<f64>::new(ClassLabel::Vehicle, VEHICLE, 1)
            .noise(1.0, 1.0)
            .at(0, 10.0, 20.0)
            .at(10, 110.0, 20.0);
        assert!(render(&[a], 11, 7).unwrap().frames.is_empty());
    }

    #[test]
    fn same_seed_same_stream() {
        let s = &builtin_suite::<f64>()[0];
        assert_eq!(s.render(3).unwrap(), s.render(3).unwrap());
        assert_ne!(s.render(3).unwrap(), s.render(4).unwrap());
    }

    #[test]
    fn suite_contract() {
        let suite = builtin_suite::<f64>();
        assert!(suite.len() >= 10);
        let conflicts = [
            "v2v_right_angle",
            "v2v_near_miss",
            "v2b_conflict",
            "v2p_crossing",
        ];
        for s in &suite {
            s.validate().unwrap();
            if conflicts.contains(&s.name.as_str()) {
                assert!(!s.truth.is_empty(), "{}", s.name);
            } else {
                assert!(s.truth.is_empty(), "{}", s.name);
            }
        }
        let dense = suite.iter().find(|s| s.name == "dense_throughput").unwrap();
        assert_eq!(dense.actors.len(), 50);
    }

    #[test]
    fn rendered_streams_validate() {
        for s in builtin_suite::<f64>() {
            let r = s.render(0).unwrap();
            for f in &r.frames {
                for d in &f.detections {
                    assert_eq!(validate_detection(d), Ok(()), "{}", s.name);
                }
            }
        }
    }

    #[test]
    fn histograms_separate_distinct_seeds() {
        use crate::tracker::appearance_cost;
        let h = |s| AppearanceHistogram::new(actor_histogram(s));
        assert!(appearance_cost(&h(17), &h(18)).value > 0.9);
        assert!(appearance_cost(&h(17), &h(17)).value < 1e-12);
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let e = builtin::<f64>("nope").unwrap_err().to_string();
        assert!(e.contains("v2v_right_angle"));
    }

    #[test]
    fn invalid_actor_rejected() {
        let a = ScriptedActor::<f64>::new(ClassLabel::Vehicle, VEHICLE, 1)
            .at(5, 0.0, 0.0)
            .at(5, 1.0, 1.0);
        assert!(render(&[a], 10, 0).is_err());
    }

    #[test]
    fn scenario_file_round_trip() {
        let s = &builtin_suite::<f64>()[3];
        let text = serde_json::to_string(s).unwrap();
        let back: Scenario<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(&back, s);
    }
}
