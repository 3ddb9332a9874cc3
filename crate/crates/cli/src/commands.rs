use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use conflictwatch::evaluation::{self, ScenarioReport, SuiteReport, SweepGrid, SWEEP_HEADER};
use conflictwatch::geometry::Calibration;
use conflictwatch::ingest::{write_stream, DetectionReader, ReadStats};
use conflictwatch::pipeline::{TrackSnapshot, TRACK_DUMP_HEADER};
use conflictwatch::scenario::{self, synthetic_homography, TruthManifest};
use conflictwatch::{
    run_detect, EvaluationReport, Homography, Pipeline, PipelineConfig, Scenario, Tracker,
};

use crate::Common;

/// A failed command, classified by exit code.
pub enum Failure {
    /// Bad or missing input data (exit 1).
    Input(anyhow::Error),
    /// Bad configuration or calibration (exit 2).
    Config(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Config(e) => e,
        }
    }
}

impl From<conflictwatch::Error> for Failure {
    fn from(e: conflictwatch::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Input(e.into())
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn input(self, context: impl Display) -> Outcome<T>;
    fn config(self, context: impl Display) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self, context: impl Display) -> Outcome<T> {
        self.map_err(|e| Failure::Input(e.into().context(context.to_string())))
    }

    fn config(self, context: impl Display) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into().context(context.to_string())))
    }
}

/// Loads the TOML config (or defaults), resolves its paths relative to the
/// file, applies flag overrides and validates.
fn load_config(common: &Common) -> Outcome<PipelineConfig<f64>> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .config(format!("cannot read config {}", path.display()))?;
            let mut cfg: PipelineConfig<f64> =
                toml::from_str(&text).config(format!("invalid config {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [&mut cfg.calibration, &mut cfg.input, &mut cfg.output]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            cfg
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(c) = common.min_confidence {
        cfg.min_confidence = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

type Source = Box<dyn BufRead + Send>;

fn open_input(flag: Option<PathBuf>, cfg: &PipelineConfig<f64>) -> Outcome<Source> {
    match flag.or_else(|| cfg.input.clone()) {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::open(&p).input(format!("cannot open input {}", p.display()))?;
            Ok(Box::new(BufReader::new(f)))
        }
        _ => Ok(Box::new(BufReader::new(io::stdin()))),
    }
}

fn open_output(flag: Option<PathBuf>, cfg: &PipelineConfig<f64>) -> Outcome<Box<dyn Write>> {
    match flag.or_else(|| cfg.output.clone()) {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(&p).input(format!("cannot create output {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(io::stdout().lock())),
    }
}

fn load_calibration(flag: Option<PathBuf>, cfg: &PipelineConfig<f64>) -> Outcome<Homography<f64>> {
    let path = flag.or_else(|| cfg.calibration.clone()).ok_or_else(|| {
        Failure::Config(anyhow!(
            "a calibration is required (--calibration or `calibration` in the config)"
        ))
    })?;
    let text =
        fs::read_to_string(&path).config(format!("cannot read calibration {}", path.display()))?;
    let fit = Calibration::from_json(&text)
        .and_then(|c| c.resolve::<f64>())
        .config(format!("calibration {}", path.display()))?;
    if let Some(r) = fit.residual {
        log::info!("homography fitted from points, RMS residual {r:e}");
    }
    Ok(fit.homography)
}

fn report_ingest(stats: &ReadStats) {
    if stats.dropped() > 0 {
        eprintln!(
            "ingest: kept {} detections, dropped {} (unknown class {}, invalid {}, low confidence {})",
            stats.kept,
            stats.dropped(),
            stats.dropped_unknown_class,
            stats.dropped_invalid,
            stats.dropped_low_confidence
        );
    }
}

pub fn track(common: &Common, input: Option<PathBuf>, output: Option<PathBuf>) -> Outcome {
    let cfg = load_config(common)?;
    let source = open_input(input, &cfg)?;
    let mut out = open_output(output, &cfg)?;
    let mut tracker = Tracker::new(cfg.tracker)?;
    let mut reader = DetectionReader::with_options(source, cfg.read_options());
    writeln!(out, "{TRACK_DUMP_HEADER}").input("write failed")?;

    let started = Instant::now();
    let mut frames = 0u64;
    for frame in reader.by_ref() {
        let frame = frame?;
        tracker.step(&frame)?;
        frames += 1;
        for t in tracker.tracks() {
            let row = TrackSnapshot {
                frame: frame.frame,
                id: t.id,
                class: t.class,
                bbox: t.bbox(),
                status: t.status,
            };
            writeln!(out, "{}", row.to_csv_line()).input("write failed")?;
        }
    }
    out.flush().input("write failed")?;
    let secs = started.elapsed().as_secs_f64();
    report_ingest(&reader.stats());
    eprintln!(
        "tracked {frames} frames in {secs:.3} s ({:.0} frames/s)",
        frames as f64 / secs.max(1e-9)
    );
    Ok(())
}

pub fn detect(
    common: &Common,
    input: Option<PathBuf>,
    calibration: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Outcome {
    let cfg = load_config(common)?;
    let homography = load_calibration(calibration, &cfg)?;
    let source = open_input(input, &cfg)?;
    let mut out = open_output(output, &cfg)?;
    let started = Instant::now();
    let summary = run_detect(&cfg, homography, source, &mut out)?;
    out.flush().input("write failed")?;
    let secs = started.elapsed().as_secs_f64();
    report_ingest(&summary.stats);
    eprintln!(
        "{} frames in {secs:.3} s ({:.0} frames/s), {} conflict event(s)",
        summary.frames,
        summary.frames as f64 / secs.max(1e-9),
        summary.events
    );
    Ok(())
}

/// Builtin names or scenario files; the whole builtin suite when empty.
fn resolve_scenarios(args: &[String]) -> Outcome<Vec<Scenario<f64>>> {
    if args.is_empty() {
        return Ok(conflictwatch::builtin_suite());
    }
    args.iter()
        .map(|arg| {
            let path = Path::new(arg);
            if path.is_file() {
                let text = fs::read_to_string(path).input(format!("cannot read scenario {arg}"))?;
                let s: Scenario<f64> =
                    serde_json::from_str(&text).input(format!("invalid scenario file {arg}"))?;
                s.validate().input(format!("invalid scenario file {arg}"))?;
                Ok(s)
            } else {
                scenario::builtin(arg).input("cannot resolve scenario")
            }
        })
        .collect()
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Outcome {
    let f = File::create(path).input(format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).input("serialization failed")?;
    writeln!(w)
        .and_then(|_| w.flush())
        .input(format!("cannot write {}", path.display()))
}

fn print_report(report: &SuiteReport) {
    for s in &report.scenarios {
        eprintln!("{:<20} {}", s.scenario, s.report.summary());
    }
    eprintln!("{:<20} {}", "overall", report.overall.summary());
}

pub fn evaluate_scenarios(
    common: &Common,
    args: &[String],
    tolerance: u64,
    output: Option<PathBuf>,
) -> Outcome {
    let cfg = load_config(common)?;
    let suite = resolve_scenarios(args)?;
    let report = evaluation::evaluate_suite(&suite, cfg.seed, &cfg, tolerance)?;
    print_report(&report);
    if let Some(path) = output {
        write_json(&path, &report)?;
    }
    Ok(())
}

pub fn evaluate_stream(
    common: &Common,
    input: PathBuf,
    truth: PathBuf,
    calibration: PathBuf,
    tolerance: u64,
    output: Option<PathBuf>,
) -> Outcome {
    let cfg = load_config(common)?;
    let homography = load_calibration(Some(calibration), &cfg)?;
    let text = fs::read_to_string(&truth)
        .input(format!("cannot read truth manifest {}", truth.display()))?;
    let manifest: TruthManifest =
        serde_json::from_str(&text).input(format!("invalid truth manifest {}", truth.display()))?;
    if let Some(bad) = manifest
        .events
        .iter()
        .find(|e| e.start > e.end || e.end >= manifest.duration)
    {
        return Err(Failure::Input(anyhow!(
            "truth manifest {}: event [{}, {}] lies outside the {}-frame duration",
            truth.display(),
            bad.start,
            bad.end,
            manifest.duration
        )));
    }

    let source = open_input(Some(input.clone()), &cfg)?;
    let mut pipeline = Pipeline::new(&cfg, homography)?;
    let mut events = Vec::new();
    let stats = pipeline.run_stream(source, cfg.read_options(), cfg.queue_capacity, |_, out| {
        events.extend(out.events);
        Ok(())
    })?;
    report_ingest(&stats);
    if let Some(last) = pipeline.tracker().last_frame() {
        if last >= manifest.duration {
            return Err(Failure::Input(anyhow!(
                "stream {} runs to frame {last} but manifest '{}' covers only {} frames",
                input.display(),
                manifest.scenario,
                manifest.duration
            )));
        }
    }

    let report = evaluation::match_events(&manifest.events, &events, tolerance);
    let suite = SuiteReport {
        seed: manifest.seed,
        tolerance,
        overall: EvaluationReport::aggregate([&report]),
        scenarios: vec![ScenarioReport {
            scenario: manifest.scenario,
            report,
        }],
    };
    print_report(&suite);
    if let Some(path) = output {
        write_json(&path, &suite)?;
    }
    Ok(())
}

pub fn simulate(common: &Common, args: &[String], dir: PathBuf) -> Outcome {
    let cfg = load_config(common)?;
    let suite = resolve_scenarios(args)?;
    fs::create_dir_all(&dir).input(format!("cannot create {}", dir.display()))?;
    let h = synthetic_homography::<f64>();
    let calibration = serde_json::json!({ "H": h.matrix().concat() });
    write_json(&dir.join("calibration.json"), &calibration)?;
    for s in &suite {
        let stream = s.render(cfg.seed)?;
        let path = dir.join(format!("{}.jsonl", s.name));
        let f = File::create(&path).input(format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(f);
        write_stream(&mut w, &stream.frames)?;
        w.flush()
            .input(format!("cannot write {}", path.display()))?;
        write_json(
            &dir.join(format!("{}.truth.json", s.name)),
            &s.manifest(cfg.seed),
        )?;
        eprintln!(
            "{:<20} {} frames, {} detections, {} labelled event(s)",
            s.name,
            s.duration,
            stream.detection_count(),
            s.truth.len()
        );
    }
    Ok(())
}

pub fn sweep(
    common: &Common,
    grid: PathBuf,
    args: &[String],
    tolerance: u64,
    output: Option<PathBuf>,
) -> Outcome {
    let cfg = load_config(common)?;
    let text = fs::read_to_string(&grid).config(format!("cannot read grid {}", grid.display()))?;
    let grid: SweepGrid<f64> =
        toml::from_str(&text).config(format!("invalid grid {}", grid.display()))?;
    let suite = resolve_scenarios(args)?;
    let rows = evaluation::sweep(&suite, cfg.seed, &cfg, &grid, tolerance)?;
    let mut out = open_output(output, &PipelineConfig::default())?;
    writeln!(out, "{SWEEP_HEADER}").input("write failed")?;
    for row in &rows {
        writeln!(out, "{}", row.to_csv_line()).input("write failed")?;
    }
    out.flush().input("write failed")?;
    let best = &rows[0];
    eprintln!(
        "{} grid points; best: tau_d={} proximity={} min_angle={} min_speed={} drop_ratio={} (DR {}, FAR {:.3})",
        rows.len(),
        best.tau_d,
        best.proximity,
        best.min_angle,
        best.min_speed,
        best.drop_ratio,
        best.detection_rate.map_or_else(|| "n/a".into(), |d| format!("{d:.3}")),
        best.false_alarm_rate
    );
    Ok(())
}
