use conflictwatch::conflict::{angle_between, ConflictConfig};
use conflictwatch::evaluation::match_events;
use conflictwatch::geometry::EARTH_RADIUS_KM;
use conflictwatch::ingest::{read_stream, write_stream, ReadOptions};
use conflictwatch::scenario::{render, GroundTruthEvent, ScriptedActor};
use conflictwatch::tracker::kalman::{self, KalmanNoise, KalmanState};
use conflictwatch::tracker::{hungarian_assign, total_cost, CostMatrix, CostWeights};
use conflictwatch::{
    haversine_km, AppearanceHistogram, BoundingBox, ClassLabel, ConflictEvent, ConflictType,
    GeoPoint, Homography, Severity,
};
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BoundingBox<f64>> {
    (0.0..2000.0, 0.0..2000.0, 0.1..500.0, 0.1..500.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
}

fn histogram() -> impl Strategy<Value = AppearanceHistogram<f64>> {
    prop::collection::vec(0.0..100.0, 48).prop_map(|mut v| {
        v[0] += 1.0;
        AppearanceHistogram::new(v)
    })
}

fn geo() -> impl Strategy<Value = GeoPoint<f64>> {
    (-90.0..=90.0, -180.0..=180.0).prop_map(|(lat, lon)| GeoPoint { lat, lon })
}

fn event(frame: u64, kind: ConflictType) -> ConflictEvent<f64> {
    ConflictEvent {
        frame,
        location: (0.0, 0.0),
        geo: GeoPoint { lat: 0.0, lon: 0.0 },
        conflict_type: kind,
        severity: Severity::NearAccident,
        participants: (1, 2),
        angle: 60.0,
        speeds_before: (30.0, 30.0),
        speeds_after: (5.0, 30.0),
    }
}

fn kind() -> impl Strategy<Value = ConflictType> {
    prop_oneof![
        Just(ConflictType::V2V),
        Just(ConflictType::V2P),
        Just(ConflictType::V2B)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn total_cost_in_unit_interval(
        a in bbox(), b in bbox(), ha in histogram(), hb in histogram(),
        w in (0.0..1.0, 0.0..1.0, 0.0..1.0, 0.01..1.0), use_hist in any::<bool>(),
    ) {
        let w = CostWeights::new(w.0, w.1, w.2, w.3).unwrap();
        let (ha, hb) = if use_hist { (Some(&ha), Some(&hb)) } else { (None, None) };
        let c = total_cost(&a, ha, &b, hb, &w);
        prop_assert!((0.0..=1.0).contains(&c), "{c}");
    }

    #[test]
    fn hungarian_argmin_is_scale_and_shift_invariant(
        (n, m, data) in (1usize..7, 1usize..7).prop_flat_map(|(n, m)| (Just(n), Just(m), prop::collection::vec(0u32..50, n * m))),
        scale in 1u32..8, shift in 0u32..20,
    ) {
        let c = CostMatrix::from_fn(n, m, |i, j| data[i * m + j] as f64);
        let t = c.map(|v| v * scale as f64 + shift as f64);
        let a = hungarian_assign(&c).unwrap();
        let b = hungarian_assign(&t).unwrap();
        // Ties may pick different pairs, but the optimum value must carry over.
        prop_assert_eq!(c.total(&b), c.total(&a));
    }

    #[test]
    fn haversine_bounded_by_half_circumference(p in geo(), q in geo()) {
        let d = haversine_km(&p, &q);
        prop_assert!((0.0..=std::f64::consts::PI * EARTH_RADIUS_KM + 1e-9).contains(&d));
    }

    #[test]
    fn approach_angle_symmetric_and_scale_invariant(
        a in (-100.0..100.0f64, -100.0..100.0f64), b in (-100.0..100.0f64, -100.0..100.0f64),
        k in 0.01..100.0f64, flip in any::<bool>(),
    ) {
        prop_assume!(a.0 != 0.0 || a.1 != 0.0);
        prop_assume!(b.0 != 0.0 || b.1 != 0.0);
        let ab = angle_between(a, b).unwrap();
        prop_assert!((0.0..=90.0).contains(&ab));
        prop_assert_eq!(ab, angle_between(b, a).unwrap());
        let s = if flip { -k } else { k };
        let scaled = angle_between((a.0 * s, a.1 * s), b).unwrap();
        prop_assert!((scaled - ab).abs() < 1e-9, "{scaled} vs {ab}");
    }

    #[test]
    fn covariance_stays_symmetric_psd(
        steps in prop::collection::vec((-5.0..5.0, -5.0..5.0, -2.0..2.0), 1..40),
    ) {
        let noise = KalmanNoise::<f64>::default();
        let mut state = KalmanState::initiate(&BoundingBox::new(100.0, 100.0, 20.0, 10.0), &noise);
        let (mut x, mut y, mut w) = (100.0, 100.0, 20.0);
        for (dx, dy, dw) in steps {
            x += dx;
            y += dy;
            w = f64::max(w + dw, 1.0);
            state = kalman::predict(&state, &noise);
            state = kalman::update(&state, &BoundingBox::new(x, y, w, 10.0), &noise).unwrap();
            let p = &state.covariance;
            for i in 0..7 {
                prop_assert!(p[i][i] > 0.0);
                for j in 0..7 {
                    prop_assert!((p[i][j] - p[j][i]).abs() <= 1e-9 * (1.0 + p[i][j].abs()));
                    // 2x2 principal minors of a PSD matrix are non-negative.
                    prop_assert!(p[i][i] * p[j][j] - p[i][j] * p[j][i] >= -1e-9 * p[i][i] * p[j][j]);
                }
            }
        }
    }

    #[test]
    fn homography_round_trip(
        h in prop::array::uniform9(-2.0..2.0f64), lat in -1.0..1.0f64, lon in -1.0..1.0f64,
    ) {
        let mut m = h;
        m[0] += 5.0;
        m[4] += 5.0;
        m[8] += 5.0;
        let Ok(hom) = Homography::from_row_major(m) else { return Ok(()); };
        let p = GeoPoint { lat, lon };
        let Ok((px, py)) = hom.world_to_image(&p) else { return Ok(()); };
        let Ok(back) = hom.image_to_world(px, py) else { return Ok(()); };
        prop_assert!((back.lat - lat).abs() < 1e-9 && (back.lon - lon).abs() < 1e-9);
    }

    #[test]
    fn rendering_is_deterministic(seed in any::<u64>(), dropout in 0.0..1.0, jitter in 0.0..3.0) {
        let actors = vec![
            ScriptedActor::<f64>::new(ClassLabel::Vehicle, (40.0, 20.0), 1)
                .noise(dropout, jitter)
                .at(0, 10.0, 100.0)
                .at(40, 200.0, 100.0),
            ScriptedActor::new(ClassLabel::Pedestrian, (8.0, 16.0), 2)
                .noise(dropout, jitter)
                .at(5, 300.0, 300.0)
                .at(40, 300.0, 280.0),
        ];
        prop_assert_eq!(render(&actors, 41, seed).unwrap(), render(&actors, 41, seed).unwrap());
    }

    #[test]
    fn stream_round_trips_through_text(seed in any::<u64>()) {
        let actors = vec![
            ScriptedActor::<f64>::new(ClassLabel::Bicycle, (10.0, 20.0), 3).at(0, 50.0, 50.0).at(20, 90.0, 50.0),
            ScriptedActor::new(ClassLabel::Vehicle, (40.0, 20.0), 4).at(3, 500.0, 50.0).at(20, 400.0, 60.0),
        ];
        let frames = render(&actors, 21, seed).unwrap().frames;
        let mut text = Vec::new();
        write_stream(&mut text, &frames).unwrap();
        let (back, stats) = read_stream(&text[..], ReadOptions::default()).unwrap();
        prop_assert_eq!(stats.dropped(), 0);
        prop_assert_eq!(back, frames);
    }

    #[test]
    fn rates_ignore_input_order(
        labels in prop::collection::vec((0u64..500, 0u64..80, kind()), 0..8),
        detections in prop::collection::vec((0u64..700, kind()), 0..12),
        rotate in 0usize..12,
    ) {
        let truth: Vec<_> = labels
            .iter()
            .map(|&(start, len, k)| GroundTruthEvent { start, end: start + len, conflict_type: k, participants: (0, 1) })
            .collect();
        let events: Vec<_> = detections.iter().map(|&(f, k)| event(f, k)).collect();
        let a = match_events(&truth, &events, 60);
        let mut truth2 = truth.clone();
        truth2.reverse();
        let mut events2 = events.clone();
        if !events2.is_empty() {
            let r = rotate % events2.len();
            events2.rotate_left(r);
        }
        let b = match_events(&truth2, &events2, 60);
        prop_assert_eq!(a.detection_rate, b.detection_rate);
        prop_assert_eq!(a.false_alarm_rate, b.false_alarm_rate);
        prop_assert!(a.detected <= a.total && a.detected + a.false_alarms == events.len());
    }

    #[test]
    fn conflict_config_round_trips(min_angle in 0.0..90.0f64, drop_ratio in 0.01..0.99f64, cooldown in 0u64..500) {
        let cfg = ConflictConfig::<f64> { min_angle, drop_ratio, cooldown, ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ConflictConfig<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
