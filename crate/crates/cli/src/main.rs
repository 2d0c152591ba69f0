//! `tapkit`: analyze tapping recordings, compare measurement methods,
//! generate synthetic recordings, and score keypoint predictions.
//!
//! Reports are a pure function of inputs and flags: no clocks unless
//! `--timestamps`, stable key order, reals rounded to 6 significant digits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use tapkit_core::features::{FeatureReport, FEATURE_NAMES};
use tapkit_core::ingest::{self, ReferenceMeasurement, TrajectoryFormat, TrajectorySet};
use tapkit_core::stats::{self, KeypointPredictionSet, PairedFeatureSample};
use tapkit_core::synth::{self, SynthSpec};
use tapkit_core::vertex::AvrParams;
use tapkit_core::{analyze_trajectory, AnalysisResult, Error};

const EXIT_INPUT: u8 = 1;
const EXIT_DEGENERATE: u8 = 2;

#[derive(Parser)]
#[command(name = "tapkit", version, about = "Finger-tapping kinematics toolkit")]
struct Cli {
    /// JSON config file mirroring the global flags; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    globals: GlobalFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalFlags {
    /// Fluctuation threshold relative to signal range.
    #[arg(long, global = true)]
    gamma_flatness: Option<f64>,
    /// Moving-mean window relative to signal length.
    #[arg(long, global = true)]
    gamma_window: Option<f64>,
    /// Long-platform threshold relative to signal length.
    #[arg(long, global = true)]
    gamma_platform: Option<f64>,
    /// Skip max-aperture normalization of the distance signal.
    #[arg(long, global = true)]
    no_normalize: bool,
    /// Keypoint pair as "a,b"; defaults to the recording's two keypoints.
    #[arg(long, global = true, value_name = "A,B")]
    keypoints: Option<String>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<ReportFormat>,
    /// Include a generation timestamp in reports (breaks determinism).
    #[arg(long, global = true)]
    timestamps: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Extract kinematic features from trajectory files or directories.
    Analyze {
        /// Trajectory files (.csv/.json) or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write the distance/reconstructed/moving-mean series and the
        /// vertex list as plot-ready CSV.
        #[arg(long)]
        emit_signal: bool,
    },
    /// Compare extracted features against another method's measurements.
    Compare {
        /// Trajectory files or directories, analyzed with the current flags.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// JSON list of reference measurements keyed by recording id.
        #[arg(long, value_name = "FILE")]
        reference: PathBuf,
        /// Agreement threshold per feature, e.g. "M-TF=0.5"; repeatable.
        /// Defaults to 0.5 Hz for the frequency features M-TF and MS.
        #[arg(long, value_name = "FEATURE=VALUE")]
        threshold: Vec<String>,
    },
    /// Generate a synthetic recording plus ground truth from a spec file.
    Synth {
        /// JSON SynthSpec files.
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        /// Override the spec's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score predicted keypoint positions against ground truth.
    EvalKeypoints {
        /// JSON file with predicted positions, shape [keypoint][frame][2].
        #[arg(long, value_name = "FILE")]
        pred: PathBuf,
        /// JSON file with true positions, same shape.
        #[arg(long, value_name = "FILE")]
        truth: PathBuf,
        /// PCK thresholds in pixels, comma separated.
        #[arg(long, value_name = "T1,T2,...", default_value = "1,2,3,4,5,10,15,20")]
        thresholds: String,
    },
}

/// File-backed counterpart of the global flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    gamma_flatness: Option<f64>,
    gamma_window: Option<f64>,
    gamma_platform: Option<f64>,
    no_normalize: Option<bool>,
    keypoints: Option<(String, String)>,
    out: Option<PathBuf>,
    format: Option<String>,
    seed: Option<u64>,
}

/// Flags merged with the config file; single source of truth for commands.
struct RunConfig {
    params: AvrParams,
    normalize: bool,
    keypoints: Option<(String, String)>,
    out: Option<PathBuf>,
    format: ReportFormat,
    timestamps: bool,
    seed: Option<u64>,
}

fn merge_config(flags: &GlobalFlags, file: &FileConfig) -> Result<RunConfig, String> {
    let defaults = AvrParams::default();
    let params = AvrParams {
        gamma_flatness: flags
            .gamma_flatness
            .or(file.gamma_flatness)
            .unwrap_or(defaults.gamma_flatness),
        gamma_window: flags.gamma_window.or(file.gamma_window).unwrap_or(defaults.gamma_window),
        gamma_platform: flags
            .gamma_platform
            .or(file.gamma_platform)
            .unwrap_or(defaults.gamma_platform),
    };
    let keypoints = match &flags.keypoints {
        Some(raw) => {
            let (a, b) = raw
                .split_once(',')
                .ok_or_else(|| format!("--keypoints needs \"a,b\", got {raw:?}"))?;
            if a.is_empty() || b.is_empty() {
                return Err("keypoint ids must be nonempty".into());
            }
            Some((a.to_string(), b.to_string()))
        }
        None => file.keypoints.clone(),
    };
    let format = match flags.format {
        Some(f) => f,
        None => match file.format.as_deref() {
            Some("json") | None => ReportFormat::Json,
            Some("csv") => ReportFormat::Csv,
            Some(other) => return Err(format!("unknown format {other:?} in config file")),
        },
    };
    Ok(RunConfig {
        params,
        normalize: !(flags.no_normalize || file.no_normalize.unwrap_or(false)),
        keypoints,
        out: flags.out.clone().or_else(|| file.out.clone()),
        format,
        timestamps: flags.timestamps,
        seed: file.seed,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file_config = match &cli.config {
        Some(path) => match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string()))
        {
            Ok(c) => c,
            Err(e) => return fail_input(&format!("config {}: {e}", path.display())),
        },
        None => FileConfig::default(),
    };
    let config = match merge_config(&cli.globals, &file_config) {
        Ok(c) => c,
        Err(e) => return fail_input(&e),
    };
    let result = match cli.command {
        Command::Analyze { inputs, emit_signal } => cmd_analyze(&config, &inputs, emit_signal),
        Command::Compare { inputs, reference, threshold } => {
            cmd_compare(&config, &inputs, &reference, &threshold)
        }
        Command::Synth { specs, seed } => cmd_synth(&config, &specs, seed),
        Command::EvalKeypoints { pred, truth, thresholds } => {
            cmd_eval_keypoints(&config, &pred, &truth, &thresholds)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("tapkit: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn fail_input(msg: &str) -> ExitCode {
    eprintln!("tapkit: {msg}");
    ExitCode::from(EXIT_INPUT)
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::FlatRecording
        | Error::Unanalyzable(_)
        | Error::InsufficientVertices { .. }
        | Error::NonPositiveInterval { .. }
        | Error::AllMissing(_) => EXIT_DEGENERATE,
        _ => EXIT_INPUT,
    }
}

/// Rounds to 6 significant digits so serialized reports are byte-stable.
fn round6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap()
}

fn fmt6(x: f64) -> String {
    serde_json::Number::from_f64(round6(x))
        .map(|n| n.to_string())
        .unwrap_or_else(|| x.to_string())
}

fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Error> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|e| e.path())
                .filter(|p| {
                    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    // skip this tool's own sidecar files when scanning a dir
                    let sidecar = [".truth.json", ".features.json", ".features.csv",
                        ".signal.csv", ".vertices.csv"]
                        .iter()
                        .any(|s| name.ends_with(s));
                    !sidecar && (name.ends_with(".csv") || name.ends_with(".json"))
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidInput("no input files found".into()));
    }
    Ok(files)
}

fn load_trajectory(path: &Path) -> Result<TrajectorySet, Error> {
    let content = std::fs::read_to_string(path)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TrajectoryFormat::Json,
        _ => TrajectoryFormat::Csv,
    };
    ingest::parse_trajectory(&content, format)
}

fn keypoint_pair<'a>(
    config: &'a RunConfig,
    traj: &'a TrajectorySet,
) -> Result<(&'a str, &'a str), Error> {
    match &config.keypoints {
        Some((a, b)) => Ok((a, b)),
        None if traj.keypoints.len() == 2 => {
            Ok((&traj.keypoints[0].keypoint_id, &traj.keypoints[1].keypoint_id))
        }
        None => Err(Error::InvalidInput(format!(
            "recording {} has {} keypoints; pick two with --keypoints a,b",
            traj.recording_id,
            traj.keypoints.len()
        ))),
    }
}

#[derive(Serialize)]
struct FeatureReportDoc {
    recording_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
    features: serde_json::Value,
}

fn rounded_features(f: &FeatureReport) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for name in FEATURE_NAMES {
        let v = f.get(name).unwrap();
        map.insert(name.to_string(), serde_json::json!(round6(v)));
    }
    if f.iti_mismatch {
        map.insert("iti_mismatch".into(), serde_json::json!(true));
    }
    serde_json::Value::Object(map)
}

fn features_csv(id: &str, f: &FeatureReport) -> String {
    let mut out = String::from("recording_id,feature,value\n");
    for name in FEATURE_NAMES {
        out.push_str(&format!("{id},{name},{}\n", fmt6(f.get(name).unwrap())));
    }
    out
}

fn now_epoch() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

fn signal_csv(r: &AnalysisResult) -> String {
    let mut out = String::from("frame,time,distance,reconstructed,moving_mean\n");
    let fps = r.signal.fps;
    for (i, ((s, rec), mu)) in r
        .signal
        .values
        .iter()
        .zip(&r.avr.reconstructed)
        .zip(&r.avr.moving_mean)
        .enumerate()
    {
        out.push_str(&format!(
            "{i},{},{},{},{}\n",
            fmt6(i as f64 / fps),
            fmt6(*s),
            fmt6(*rec),
            fmt6(*mu)
        ));
    }
    out
}

fn vertices_csv(r: &AnalysisResult) -> String {
    let mut out = String::from("time,frame,height,kind\n");
    for v in &r.avr.vertices.vertices {
        let kind = match v.kind {
            tapkit_core::vertex::VertexKind::Peak => "peak",
            tapkit_core::vertex::VertexKind::Trough => "trough",
        };
        out.push_str(&format!("{},{},{},{kind}\n", fmt6(v.time), v.frame, fmt6(v.height)));
    }
    out
}

fn cmd_analyze(
    config: &RunConfig,
    inputs: &[PathBuf],
    emit_signal: bool,
) -> Result<ExitCode, Error> {
    let files = collect_inputs(inputs)?;
    let mut reports = Vec::new();
    let mut parse_failures = 0usize;
    let mut degenerate = 0usize;
    for path in &files {
        let traj = match load_trajectory(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                parse_failures += 1;
                continue;
            }
        };
        let (a, b) = keypoint_pair(config, &traj)?;
        match analyze_trajectory(&traj, a, b, &config.params, config.normalize) {
            Ok(r) => reports.push(r),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                if exit_code_for(&e) == EXIT_DEGENERATE {
                    degenerate += 1;
                } else {
                    parse_failures += 1;
                }
            }
        }
    }
    let generated_at = config.timestamps.then(now_epoch);
    if let Some(dir) = &config.out {
        for r in &reports {
            match config.format {
                ReportFormat::Json => {
                    let doc = FeatureReportDoc {
                        recording_id: r.recording_id.clone(),
                        generated_at,
                        features: rounded_features(&r.features),
                    };
                    write_out(
                        dir,
                        &format!("{}.features.json", r.recording_id),
                        &(serde_json::to_string_pretty(&doc)? + "\n"),
                    )?;
                }
                ReportFormat::Csv => {
                    write_out(
                        dir,
                        &format!("{}.features.csv", r.recording_id),
                        &features_csv(&r.recording_id, &r.features),
                    )?;
                }
            }
            if emit_signal {
                write_out(dir, &format!("{}.signal.csv", r.recording_id), &signal_csv(r))?;
                write_out(dir, &format!("{}.vertices.csv", r.recording_id), &vertices_csv(r))?;
            }
        }
    } else {
        let docs: Vec<FeatureReportDoc> = reports
            .iter()
            .map(|r| FeatureReportDoc {
                recording_id: r.recording_id.clone(),
                generated_at,
                features: rounded_features(&r.features),
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "recordings": docs }))?);
    }
    if files.len() > 1 {
        eprintln!(
            "analyzed {} of {} recordings ({parse_failures} unreadable, {degenerate} unanalyzable)",
            reports.len(),
            files.len()
        );
    }
    Ok(if parse_failures > 0 {
        ExitCode::from(EXIT_INPUT)
    } else if degenerate > 0 {
        ExitCode::from(EXIT_DEGENERATE)
    } else {
        ExitCode::SUCCESS
    })
}

fn parse_thresholds(raw: &[String]) -> Result<BTreeMap<String, f64>, Error> {
    // default 0.5 Hz agreement threshold for the frequency features
    let mut map = BTreeMap::from([("M-TF".to_string(), 0.5), ("MS".to_string(), 0.5)]);
    for item in raw {
        let (name, value) = item.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("--threshold needs FEATURE=VALUE, got {item:?}"))
        })?;
        if !FEATURE_NAMES.contains(&name) {
            return Err(Error::UnknownFeature(name.to_string()));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad threshold value in {item:?}")))?;
        map.insert(name.to_string(), value);
    }
    Ok(map)
}

#[derive(Serialize)]
struct FeatureComparison {
    condition: String,
    feature: String,
    pairs: usize,
    t: f64,
    df: f64,
    p: f64,
    decision: stats::Decision,
    bias: f64,
    loa_low: f64,
    loa_high: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement_fraction: Option<f64>,
}

fn cmd_compare(
    config: &RunConfig,
    inputs: &[PathBuf],
    reference: &Path,
    thresholds: &[String],
) -> Result<ExitCode, Error> {
    let thresholds = parse_thresholds(thresholds)?;
    let refs = ingest::parse_reference(&std::fs::read_to_string(reference)?)?;
    let files = collect_inputs(inputs)?;
    let mut extracted: BTreeMap<String, FeatureReport> = BTreeMap::new();
    for path in &files {
        let traj = load_trajectory(path)?;
        let (a, b) = keypoint_pair(config, &traj)?;
        let r = analyze_trajectory(&traj, a, b, &config.params, config.normalize)?;
        extracted.insert(r.recording_id.clone(), r.features);
    }
    // (condition -> matched (ours, reference) pairs), in reference order
    let mut by_condition: BTreeMap<String, Vec<(&FeatureReport, &ReferenceMeasurement)>> =
        BTreeMap::new();
    for m in &refs {
        if let Some(ours) = extracted.get(&m.recording_id) {
            by_condition.entry(m.condition.clone()).or_default().push((ours, m));
        }
    }
    if by_condition.values().all(|v| v.is_empty()) {
        return Err(Error::InvalidInput(
            "no recording ids shared between inputs and reference".into(),
        ));
    }
    let mut rows = Vec::new();
    for (condition, pairs) in &by_condition {
        for feature in FEATURE_NAMES {
            let sample: Vec<(f64, f64, String)> = pairs
                .iter()
                .filter_map(|(ours, m)| {
                    m.features
                        .get(feature)
                        .map(|&r| (ours.get(feature).unwrap(), r, m.recording_id.clone()))
                })
                .collect();
            if sample.len() < 2 {
                continue;
            }
            let a: Vec<f64> = sample.iter().map(|p| p.0).collect();
            let b: Vec<f64> = sample.iter().map(|p| p.1).collect();
            let pair_count = sample.len();
            let paired = PairedFeatureSample {
                pairs: sample,
                feature_name: feature.to_string(),
                condition_label: condition.clone(),
            };
            let welch = stats::welch_t_test(&a, &b)?;
            let ba = stats::bland_altman(&paired)?;
            let threshold = thresholds.get(feature).copied();
            let agreement = match threshold {
                Some(t) => Some(stats::agreement_fraction(&paired, t)?),
                None => None,
            };
            rows.push(FeatureComparison {
                condition: condition.clone(),
                feature: feature.to_string(),
                pairs: pair_count,
                t: round6(welch.t),
                df: round6(welch.df),
                p: round6(welch.p),
                decision: welch.decision,
                bias: round6(ba.bias),
                loa_low: round6(ba.loa_low),
                loa_high: round6(ba.loa_high),
                agreement_threshold: threshold,
                agreement_fraction: agreement.map(round6),
            });
        }
    }
    let content = match config.format {
        ReportFormat::Json => {
            let mut doc = serde_json::Map::new();
            if config.timestamps {
                doc.insert("generated_at".into(), serde_json::json!(now_epoch()));
            }
            doc.insert("comparisons".into(), serde_json::to_value(&rows)?);
            serde_json::to_string_pretty(&serde_json::Value::Object(doc))? + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "condition,feature,pairs,t,df,p,decision,bias,loa_low,loa_high,\
                 agreement_threshold,agreement_fraction\n",
            );
            for r in &rows {
                let decision = match r.decision {
                    stats::Decision::Accept => "accept",
                    stats::Decision::Reject => "reject",
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{decision},{},{},{},{},{}\n",
                    r.condition,
                    r.feature,
                    r.pairs,
                    fmt6(r.t),
                    fmt6(r.df),
                    fmt6(r.p),
                    fmt6(r.bias),
                    fmt6(r.loa_low),
                    fmt6(r.loa_high),
                    r.agreement_threshold.map(fmt6).unwrap_or_default(),
                    r.agreement_fraction.map(fmt6).unwrap_or_default(),
                ));
            }
            out
        }
    };
    match &config.out {
        Some(dir) => {
            let ext = if config.format == ReportFormat::Json { "json" } else { "csv" };
            write_out(dir, &format!("agreement.{ext}"), &content)?
        }
        None => print!("{content}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(config: &RunConfig, specs: &[PathBuf], seed: Option<u64>) -> Result<ExitCode, Error> {
    for path in specs {
        let mut spec: SynthSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if let Some(seed) = seed.or(config.seed) {
            spec.seed = seed;
        }
        let (traj, truth) = synth::generate(&spec)?;
        let id = traj.recording_id.clone();
        let (name, content) = match config.format {
            ReportFormat::Json => {
                (format!("{id}.json"), ingest::serialize_trajectory_json(&traj)?)
            }
            ReportFormat::Csv => (format!("{id}.csv"), ingest::serialize_trajectory_csv(&traj)),
        };
        let truth_doc = serde_json::to_string_pretty(&truth)? + "\n";
        match &config.out {
            Some(dir) => {
                write_out(dir, &name, &content)?;
                write_out(dir, &format!("{id}.truth.json"), &truth_doc)?;
                eprintln!("{id}: {} frames", traj.duration_frames);
            }
            None => {
                print!("{content}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval_keypoints(
    config: &RunConfig,
    pred: &Path,
    truth: &Path,
    thresholds: &str,
) -> Result<ExitCode, Error> {
    let parse_positions = |path: &Path| -> Result<Vec<Vec<(f64, f64)>>, Error> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    };
    let thresholds: Vec<f64> = thresholds
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad PCK threshold {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let set = KeypointPredictionSet::new(parse_positions(pred)?, parse_positions(truth)?)?;
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| stats::pck(&set, t).map(|f| (t, round6(f))))
        .collect::<Result<_, _>>()?;
    let mpjpe = round6(stats::mpjpe(&set));
    let content = match config.format {
        ReportFormat::Json => {
            let mut doc = serde_json::Map::new();
            if config.timestamps {
                doc.insert("generated_at".into(), serde_json::json!(now_epoch()));
            }
            doc.insert("mpjpe".into(), serde_json::json!(mpjpe));
            doc.insert(
                "pck_curve".into(),
                serde_json::json!(curve
                    .iter()
                    .map(|(t, f)| serde_json::json!({ "threshold": t, "fraction": f }))
                    .collect::<Vec<_>>()),
            );
            serde_json::to_string_pretty(&serde_json::Value::Object(doc))? + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from("metric,threshold,value\n");
            out.push_str(&format!("mpjpe,,{}\n", fmt6(mpjpe)));
            for (t, f) in &curve {
                out.push_str(&format!("pck,{},{}\n", fmt6(*t), fmt6(*f)));
            }
            out
        }
    };
    match &config.out {
        Some(dir) => {
            let ext = if config.format == ReportFormat::Json { "json" } else { "csv" };
            write_out(dir, &format!("keypoint-eval.{ext}"), &content)?
        }
        None => print!("{content}"),
    }
    Ok(ExitCode::SUCCESS)
}
