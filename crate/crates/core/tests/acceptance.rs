//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.
//!
//! Run with `cargo test -p conflictwatch-core --test acceptance -- --nocapture`.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use conflictwatch::conflict::angle_between;
use conflictwatch::evaluation::{evaluate_suite, DEFAULT_TOLERANCE};
use conflictwatch::geometry::{estimate_speed_from_history, speed_from_distance, MotionConfig};
use conflictwatch::ingest::write_stream;
use conflictwatch::scenario::{builtin, synthetic_homography};
use conflictwatch::tracker::kalman::{self, KalmanNoise, KalmanState};
use conflictwatch::tracker::{
    appearance_cost, hungarian_assign, jaccard_cost, position_cost, size_cost, total_cost,
    CostMatrix, CostTerms, CostWeights, HistoryEntry, TrackId,
};
use conflictwatch::{
    builtin_suite, haversine_km, run_detect, AppearanceHistogram, BoundingBox, GeoPoint, Pipeline,
    PipelineConfig, Tracker, TrackerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COST_TOL: f64 = 1e-9;
const HAVERSINE_KM_TOL: f64 = 1e-3;
const METRIC_TOL: f64 = 1e-9;
const KALMAN_VELOCITY_TOL: f64 = 1e-3;
const KALMAN_FIXED_POINT_TOL: f64 = 1e-9;
const ANGLE_TOL_DEG: f64 = 1e-9;
const ASSIGNMENT_BUDGET: Duration = Duration::from_secs(10);
const MIN_FPS: f64 = 300.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Minimum total over all injective maps of the shorter side into the longer.
fn brute_force_min(c: &CostMatrix<f64>) -> f64 {
    let (n, m) = (c.rows(), c.cols());
    let at = |short: usize, long: usize| {
        if n <= m {
            c.get(short, long)
        } else {
            c.get(long, short)
        }
    };
    let (k, l) = (n.min(m), n.max(m));
    fn rec(
        i: usize,
        k: usize,
        l: usize,
        used: &mut [bool],
        acc: f64,
        at: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
    ) {
        if i == k {
            *best = best.min(acc);
            return;
        }
        for j in 0..l {
            if !used[j] {
                used[j] = true;
                rec(i + 1, k, l, used, acc + at(i, j), at, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, k, l, &mut vec![false; l], 0.0, &at, &mut best);
    best
}

fn assignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let started = Instant::now();
    for trial in 0..1000 {
        let (n, m) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        // Integer costs make the comparison exact regardless of summation order.
        let c = CostMatrix::from_fn(n, m, |_, _| rng.gen_range(0..100) as f64);
        let pairs = hungarian_assign(&c).map_err(|e| e.to_string())?;
        check(
            pairs.len() == n.min(m),
            format!("trial {trial}: {} pairs for {n}x{m}", pairs.len()),
        )?;
        let rows: HashSet<_> = pairs.iter().map(|p| p.0).collect();
        let cols: HashSet<_> = pairs.iter().map(|p| p.1).collect();
        check(
            rows.len() == pairs.len() && cols.len() == pairs.len(),
            format!("trial {trial}: not one-to-one"),
        )?;
        let (got, want) = (c.total(&pairs), brute_force_min(&c));
        check(
            got == want,
            format!("trial {trial}: {n}x{m} total {got} != brute force {want}"),
        )?;
    }
    let elapsed = started.elapsed();
    check(elapsed < ASSIGNMENT_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "1000 matrices up to 8x8 exact, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox<f64> {
    BoundingBox::new(
        rng.gen_range(0.0..1920.0),
        rng.gen_range(0.0..1080.0),
        rng.gen_range(0.5..400.0),
        rng.gen_range(0.5..400.0),
    )
}

fn random_histogram(rng: &mut ChaCha8Rng) -> AppearanceHistogram<f64> {
    let mut bins: Vec<f64> = (0..48)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..500.0)
            }
        })
        .collect();
    let k = rng.gen_range(0..48);
    bins[k] += 1.0;
    AppearanceHistogram::new(bins)
}

fn cost_ranges() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    for trial in 0..10_000 {
        let (b1, b2) = (random_box(&mut rng), random_box(&mut rng));
        let (h1, h2) = (random_histogram(&mut rng), random_histogram(&mut rng));
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let w =
            CostWeights::new(raw[0], raw[1], raw[2], raw[3] + 1e-3).map_err(|e| e.to_string())?;
        let with_hist = rng.gen_bool(0.8);
        let terms = [
            appearance_cost(&h1, &h2).value,
            size_cost(&b1, &b2),
            position_cost(&b1, &b2),
            jaccard_cost(&b1, &b2),
            total_cost(
                &b1,
                with_hist.then_some(&h1),
                &b2,
                with_hist.then_some(&h2),
                &w,
            ),
        ];
        check(
            terms.iter().all(|&v| in_unit(v)),
            format!("trial {trial}: terms {terms:?}"),
        )?;
    }

    let close = |a: f64, b: f64| (a - b).abs() <= COST_TOL;
    let corners = |a, b, c, d| BoundingBox::from_corners(a, b, c, d);
    let mut h = vec![5.0; 48];
    h[0] = 9.0;
    h[1] = 1.0;
    let mut g = h.clone();
    g.swap(0, 1);
    let h1 = AppearanceHistogram::new(h.clone());
    let scaled = AppearanceHistogram::new(h.iter().map(|v| 3.0 * v).collect());
    let flat = AppearanceHistogram::new(vec![2.0; 48]);
    let examples = [
        ("appearance self", appearance_cost(&h1, &h1).value, 0.0),
        (
            "appearance anti-correlated core",
            appearance_cost(&h1, &AppearanceHistogram::new(g)).value,
            1.0,
        ),
        (
            "appearance scaled",
            appearance_cost(&h1, &scaled).value,
            0.0,
        ),
        ("appearance flat", appearance_cost(&h1, &flat).value, 0.5),
        (
            "size 10 vs 30",
            size_cost(
                &BoundingBox::new(50.0, 50.0, 20.0, 10.0),
                &BoundingBox::new(50.0, 50.0, 20.0, 30.0),
            ),
            0.25,
        ),
        (
            "position 100 vs 300",
            position_cost(
                &BoundingBox::new(100.0, 100.0, 4.0, 4.0),
                &BoundingBox::new(300.0, 100.0, 4.0, 4.0),
            ),
            0.25,
        ),
        (
            "jaccard identical",
            jaccard_cost(
                &corners(0.0, 0.0, 10.0, 10.0),
                &corners(0.0, 0.0, 10.0, 10.0),
            ),
            0.0,
        ),
        (
            "jaccard disjoint",
            jaccard_cost(
                &corners(0.0, 0.0, 10.0, 10.0),
                &corners(20.0, 0.0, 30.0, 10.0),
            ),
            1.0,
        ),
        (
            "jaccard corner boxes",
            jaccard_cost(
                &corners(0.0, 0.0, 10.0, 10.0),
                &corners(5.0, 0.0, 15.0, 10.0),
            ),
            2.0 / 3.0,
        ),
        (
            "weighted (0, 0.25, 0.25, 2/3)",
            CostTerms {
                appearance: Some(0.0),
                size: 0.25,
                position: 0.25,
                jaccard: 2.0 / 3.0,
            }
            .weighted(&CostWeights::default()),
            0.25 * (0.25 + 0.25 + 2.0 / 3.0),
        ),
    ];
    for (name, got, want) in examples {
        check(close(got, want), format!("{name}: {got} != {want}"))?;
    }
    check(
        appearance_cost(&h1, &flat).degenerate,
        "flat histogram not flagged",
    )?;
    let (_, ws, wp, wk) = CostWeights::<f64>::default().effective(false);
    check(
        [ws, wp, wk].iter().all(|&v| close(v, 1.0 / 3.0)),
        format!("redistributed weights ({ws}, {wp}, {wk})"),
    )?;
    Ok(format!(
        "10000 random pairs in [0,1], {} hand examples within {COST_TOL:e}",
        examples.len() + 2
    ))
}

fn haversine() -> Outcome {
    let p = |lat: f64, lon: f64| GeoPoint { lat, lon };
    let d = haversine_km(&p(0.0, 0.0), &p(0.0, 1.0));
    check(
        (d - 111.195).abs() <= HAVERSINE_KM_TOL,
        format!("equatorial degree {d} km"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut random = || p(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0));
    for trial in 0..1000 {
        let (a, b, c) = (random(), random(), random());
        let (ab, ba) = (haversine_km(&a, &b), haversine_km(&b, &a));
        check(
            (ab - ba).abs() <= METRIC_TOL,
            format!("trial {trial}: asymmetric {ab} vs {ba}"),
        )?;
        let (bc, ac) = (haversine_km(&b, &c), haversine_km(&a, &c));
        check(
            ac <= ab + bc + METRIC_TOL,
            format!("trial {trial}: triangle {ac} > {ab} + {bc}"),
        )?;
    }
    Ok(format!(
        "1 degree = {d:.4} km; symmetry and triangle on 1000 triples"
    ))
}

fn speed_formula() -> Outcome {
    let v = speed_from_distance(0.01_f64, 30.0, 30);
    check(
        v == 36.0,
        format!("10 m over 30 frames at 30 fps gave {v} km/h"),
    )?;
    let still: Vec<_> = (0..30)
        .map(|f| HistoryEntry {
            frame: f,
            x: 320.0,
            y: 240.0,
        })
        .collect();
    let est = estimate_speed_from_history(
        &still,
        &synthetic_homography::<f64>(),
        &MotionConfig::default(),
    )
    .map_err(|e| e.to_string())?
    .ok_or("no estimate")?;
    check(
        est.stalled && est.speed == 0.0,
        format!("stationary track: {est:?}"),
    )?;
    Ok("36 km/h exact; stalled track reports 0".into())
}

fn kalman_convergence() -> Outcome {
    let noise = KalmanNoise::<f64>::default();
    let (vx, vy) = (2.0, -1.0);
    let at = |k: f64| BoundingBox::new(100.0 + vx * k, 200.0 + vy * k, 20.0, 10.0);
    let mut state = KalmanState::initiate(&at(0.0), &noise);
    for k in 1..=20 {
        state = kalman::predict(&state, &noise);
        state = kalman::update(&state, &at(k as f64), &noise).map_err(|e| e.to_string())?;
    }
    let (ex, ey) = state.velocity();
    let err = (ex - vx).abs().max((ey - vy).abs());
    check(
        err <= KALMAN_VELOCITY_TOL,
        format!("velocity ({ex}, {ey}) after 20 updates"),
    )?;

    let predicted = kalman::predict(&state, &noise);
    let updated =
        kalman::update(&predicted, &predicted.to_box(), &noise).map_err(|e| e.to_string())?;
    let drift = (0..4)
        .map(|i| (updated.mean[i] - predicted.mean[i]).abs())
        .fold(0.0, f64::max);
    check(
        drift <= KALMAN_FIXED_POINT_TOL,
        format!("zero innovation moved the mean by {drift}"),
    )?;
    Ok(format!(
        "velocity error {err:.2e} after 20 updates; zero-innovation drift {drift:.1e}"
    ))
}

fn angle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut tested = 0;
    while tested < 1000 {
        let ma: f64 = rng.gen_range(-89.0f64..89.0).to_radians().tan();
        let mb: f64 = rng.gen_range(-89.0f64..89.0).to_radians().tan();
        let denom = 1.0 + ma * mb;
        if denom.abs() < 1e-6 {
            continue;
        }
        let slope_form = ((ma - mb) / denom).atan().abs().to_degrees();
        let sa = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let sb = rng.gen_range(0.1..10.0);
        let vector_form = angle_between((sa, sa * ma), (sb, sb * mb)).ok_or("zero vector")?;
        check(
            (slope_form - vector_form).abs() <= ANGLE_TOL_DEG,
            format!("slopes {ma}, {mb}: {vector_form} vs {slope_form}"),
        )?;
        tested += 1;
    }
    Ok("1000 slope pairs agree".into())
}

/// Actor index -> set of track ids its detections were associated with.
fn identities(name: &str) -> Result<HashMap<usize, HashSet<TrackId>>, String> {
    let scene = builtin::<f64>(name).map_err(|e| e.to_string())?;
    let stream = scene.render(0).map_err(|e| e.to_string())?;
    let mut tracker = Tracker::new(TrackerConfig::default()).map_err(|e| e.to_string())?;
    let mut ids: HashMap<usize, HashSet<TrackId>> = HashMap::new();
    for (frame, owners) in stream.frames.iter().zip(&stream.actors) {
        let report = tracker.step(frame).map_err(|e| e.to_string())?;
        for &(id, j, _) in &report.association.matches {
            ids.entry(owners[j]).or_default().insert(id);
        }
        for (&j, &id) in report
            .association
            .unmatched_detections
            .iter()
            .zip(&report.spawned)
        {
            ids.entry(owners[j]).or_default().insert(id);
        }
    }
    Ok(ids)
}

fn end_to_end() -> Outcome {
    let suite = builtin_suite::<f64>();
    check(
        suite.len() >= 10,
        format!("only {} builtin scenarios", suite.len()),
    )?;
    let report = evaluate_suite(&suite, 0, &PipelineConfig::default(), DEFAULT_TOLERANCE)
        .map_err(|e| e.to_string())?;
    for s in &report.scenarios {
        check(
            s.report.missed == 0 && s.report.false_alarms == 0,
            format!("{}: {}", s.scenario, s.report.summary()),
        )?;
    }
    let overall = &report.overall;
    check(
        overall.detection_rate == Some(1.0) && overall.false_alarm_rate == 0.0,
        overall.summary(),
    )?;
    for name in ["occlusion_gap", "identity_crossing"] {
        let ids = identities(name)?;
        let mut seen = HashSet::new();
        for (actor, set) in &ids {
            check(
                set.len() == 1,
                format!("{name}: actor {actor} had tracks {set:?}"),
            )?;
            check(
                seen.insert(*set.iter().next().unwrap()),
                format!("{name}: track shared by two actors"),
            )?;
        }
    }
    Ok(format!(
        "{} scenarios: {}; no identity switches",
        suite.len(),
        overall.summary()
    ))
}

fn throughput() -> Outcome {
    let scene = builtin::<f64>("dense_throughput").map_err(|e| e.to_string())?;
    let stream = scene.render(0).map_err(|e| e.to_string())?;
    let mut pipeline = Pipeline::new(&PipelineConfig::default(), synthetic_homography())
        .map_err(|e| e.to_string())?;
    let started = Instant::now();
    pipeline
        .run_frames(&stream.frames)
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let fps = pipeline.frames_processed() as f64 / secs;
    let live = pipeline.tracker().tracks().len();
    check(live == 50, format!("{live} live tracks at the end"))?;
    check(fps > MIN_FPS, format!("{fps:.0} frames/s"))?;
    Ok(format!(
        "{} frames, 50 actors, {fps:.0} frames/s",
        pipeline.frames_processed()
    ))
}

fn determinism() -> Outcome {
    let scene = builtin::<f64>("v2v_right_angle").map_err(|e| e.to_string())?;
    let mut input = Vec::new();
    write_stream(
        &mut input,
        &scene.render(5).map_err(|e| e.to_string())?.frames,
    )
    .map_err(|e| e.to_string())?;
    let config = PipelineConfig::<f64>::default();
    let run = || -> Result<Vec<u8>, String> {
        let mut out = Vec::new();
        run_detect(&config, synthetic_homography(), &input[..], &mut out)
            .map_err(|e| e.to_string())?;
        Ok(out)
    };
    let (a, b) = (run()?, run()?);
    check(!a.is_empty(), "no events to compare")?;
    check(a == b, "outputs differ")?;
    Ok(format!("{} identical bytes of event output", a.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("assignment oracle", assignment_oracle),
        ("cost-term ranges", cost_ranges),
        ("haversine", haversine),
        ("speed formula", speed_formula),
        ("kalman convergence", kalman_convergence),
        ("angle equivalence", angle_equivalence),
        ("end-to-end synthetic suite", end_to_end),
        ("throughput", throughput),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
