//! Command-line interface: `synth`, `enroll`, `verify`, `evaluate`, and
//! `dump-scalogram`.
//!
//! Exit codes: 0 on success (including a rejected claim — the decision is in
//! the JSON output), 1 on pipeline errors, 2 on usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{self, PartitionId};
use crate::features::{CwtPlan, ScaleGrid};
use crate::io::{self, ManifestEntry};
use crate::matching;
use crate::pipeline;
use crate::preprocess;
use crate::recording::State;
use crate::synthgen::{self, CohortConfig, NoiseSpec};

#[derive(Parser)]
#[command(name = "pulseprint", version, about = "PPG biometric verification toolkit")]
struct Cli {
    /// TOML run-configuration file; omitted fields use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled cohort as CSV recordings plus manifest.
    Synth(SynthArgs),
    /// Fit a gallery model from a dataset manifest.
    Enroll(EnrollArgs),
    /// Score one claimed identity against an enrolled model.
    Verify(VerifyArgs),
    /// Run an evaluation protocol and write results/ROC CSVs.
    Evaluate(EvaluateArgs),
    /// Write one segment's scalogram magnitudes as CSV, for inspection.
    DumpScalogram(DumpArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShapeArg {
    /// One relax recording per subject.
    Single,
    /// Relax + post-exercise in session 1 and a drifted session 2.
    TwoSession,
    /// One recording per emotion index.
    Emotions,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for recordings and manifest.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "single")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    /// Recording length in seconds.
    #[arg(long, default_value_t = 120.0)]
    duration: f64,
    #[arg(long, default_value_t = 100.0)]
    fs: f64,
    /// White-noise level relative to unit pulse amplitude.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Motion-artifact bursts per minute.
    #[arg(long, default_value_t = 0.0)]
    bursts: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Number of emotion partitions (emotions shape only).
    #[arg(long, default_value_t = 4)]
    emotions: u32,
}

#[derive(Args)]
struct EnrollArgs {
    /// Dataset manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Output model path (JSON bundle).
    #[arg(long)]
    out: PathBuf,
    /// Override the configured method.
    #[arg(long, value_enum)]
    method: Option<Method>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Enrolled model bundle.
    #[arg(long)]
    model: PathBuf,
    /// Claimed identity.
    #[arg(long)]
    claim: String,
    /// Test recording CSV (`t,ppg` with header, or a bare sample column).
    #[arg(long)]
    recording: PathBuf,
    /// Accept when the score is at or below this threshold.
    #[arg(long)]
    threshold: f64,
    /// Sampling rate; required for header-less recordings.
    #[arg(long)]
    fs: Option<f64>,
    /// Activity state of the test recording.
    #[arg(long, default_value = "relax")]
    state: String,
    /// Limit the claim to the first N averaged test segments.
    #[arg(long)]
    ntest: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    SingleSession,
    CrossPartition,
    CrossEmotion,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for results.csv and per-cell ROC CSVs.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "single-session")]
    protocol: ProtocolArg,
    /// Override the configured method.
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Training partition as `session:state` (cross-partition only).
    #[arg(long)]
    train_partition: Option<String>,
    /// Test partitions as `session:state`; repeatable (cross-partition only).
    #[arg(long)]
    test_partition: Vec<String>,
    /// Also write an SVG overlay of the ROC curves.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct DumpArgs {
    /// Recording CSV.
    #[arg(long)]
    recording: PathBuf,
    #[arg(long)]
    fs: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Which averaged segment to transform.
    #[arg(long, default_value_t = 0)]
    segment_index: usize,
    #[arg(long, default_value = "relax")]
    state: String,
}

/// Entry point for the `pulseprint` binary.
pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    ExitCode::from(run(std::env::args_os()) as u8)
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports help/version on stdout with success, usage errors
            // on stderr with code 2
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_toml(&std::fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Synth(args) => synth(args, &cfg),
        Command::Enroll(args) => enroll(args, cfg),
        Command::Verify(args) => verify(args, cli.config.is_some(), cfg),
        Command::Evaluate(args) => evaluate(args, cfg),
        Command::DumpScalogram(args) => dump_scalogram(args, &cfg),
    }
}

fn synth(args: SynthArgs, _cfg: &RunConfig) -> Result<()> {
    let cohort = CohortConfig::default();
    let noise = NoiseSpec { white: args.noise, bursts_per_min: args.bursts };
    let synth = match args.shape {
        ShapeArg::Single => synthgen::generate_single_session(
            args.subjects,
            args.duration,
            args.fs,
            noise,
            args.seed,
            &cohort,
        )?,
        ShapeArg::TwoSession => synthgen::generate_two_session(
            args.subjects,
            args.duration,
            args.fs,
            noise,
            args.seed,
            &cohort,
        )?,
        ShapeArg::Emotions => synthgen::generate_emotions(
            args.subjects,
            args.emotions,
            args.duration,
            args.fs,
            noise,
            args.seed,
            &cohort,
        )?,
    };
    let manifest = io::write_dataset(&args.out_dir, &synth)?;
    println!(
        "wrote {} recordings for {} subjects to {}",
        synth.dataset.recordings.len(),
        args.subjects,
        manifest.display()
    );
    Ok(())
}

fn enroll(args: EnrollArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(m) = args.method {
        cfg = cfg.with_method(m);
    }
    let dataset = io::load_dataset(&args.manifest)?;
    let bundle = io::enroll(&dataset, &cfg)?;
    io::save_model(&args.out, &bundle)?;
    println!(
        "enrolled {} subjects with {} (L={}, m={}) -> {}",
        bundle.model.gallery.len(),
        bundle.method,
        bundle.model.input_dim,
        bundle.model.output_dim,
        args.out.display()
    );
    Ok(())
}

fn verify(args: VerifyArgs, explicit_config: bool, cfg: RunConfig) -> Result<()> {
    let bundle = io::load_model(&args.model)?;
    // An explicitly supplied configuration must match the model's; without
    // one, the model's embedded configuration is used.
    if explicit_config {
        io::check_fingerprint(&bundle, &cfg)?;
    }
    let cfg = bundle.config.clone();

    let state: State = args.state.parse()?;
    let fs = match args.fs {
        Some(fs) => fs,
        None => infer_fs(&args.recording)?,
    };
    let entry = ManifestEntry {
        file: args.recording.clone(),
        subject: "probe".into(),
        session: "probe".into(),
        state,
        fs,
    };
    let rec = io::read_recording_csv(&args.recording, &entry)?;
    let rows = pipeline::extract_rows(&rec, &cfg)?;
    if rows.is_empty() {
        return Err(Error::InsufficientSignal("no usable segments in test recording".into()));
    }
    let limit = args.ntest.unwrap_or(rows.len()).min(rows.len()).max(1);
    let rows: Vec<Vec<f64>> = rows[..limit]
        .iter()
        .map(|r| crate::features::normalize_length(r.clone(), bundle.model.input_dim))
        .collect();
    let score = matching::claim_score(
        &bundle.model,
        &args.claim,
        &rows,
        pipeline::distance_for(bundle.method),
        &cfg.matching,
    )?;
    let decision = matching::decide(&score, args.threshold);
    let accepted = decision == matching::Decision::Accept;
    println!(
        "{}",
        serde_json::json!({
            "claimed_id": score.claimed_id,
            "score": score.value,
            "threshold": args.threshold,
            "accepted": accepted,
            "n_test_segments": limit,
            "method": bundle.method.name(),
        })
    );
    Ok(())
}

/// Derive the sampling rate from a recording's `t` column.
fn infer_fs(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path)?;
    let mut t = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if !line.starts_with('t') {
                return Err(Error::InvalidConfig(
                    "recording has no t column; pass --fs for bare sample files".into(),
                ));
            }
            continue;
        }
        if let Some(first) = line.split(',').next() {
            if let Ok(v) = first.trim().parse::<f64>() {
                t.push(v);
            }
        }
    }
    if t.len() < 2 || t[t.len() - 1] <= t[0] {
        return Err(Error::InvalidConfig("cannot infer sampling rate from t column".into()));
    }
    Ok((t.len() - 1) as f64 / (t[t.len() - 1] - t[0]))
}

fn evaluate(args: EvaluateArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(m) = args.method {
        cfg = cfg.with_method(m);
    }
    let dataset = io::load_dataset(&args.manifest)?;
    let report = match args.protocol {
        ProtocolArg::SingleSession => eval::protocol_single_session(&dataset, &cfg)?,
        ProtocolArg::CrossEmotion => eval::protocol_cross_emotion(&dataset, &cfg)?,
        ProtocolArg::CrossPartition => {
            let train: PartitionId = args
                .train_partition
                .as_deref()
                .ok_or_else(|| {
                    Error::InvalidConfig("cross-partition needs --train-partition".into())
                })?
                .parse()?;
            let tests: Result<Vec<PartitionId>> =
                args.test_partition.iter().map(|s| s.parse()).collect();
            let tests = tests?;
            eval::protocol_cross_partition(&dataset, &cfg, &train, &tests)?
        }
    };
    io::write_report(&args.out_dir, &report, args.plot)?;
    println!("dataset={} method={}", dataset.name, cfg.method());
    println!("{:<24} {:>6} {:>10} {:>10} {:>6}", "protocol", "nTest", "meanEER%", "stdEER%", "iters");
    for c in &report.cells {
        println!(
            "{:<24} {:>6} {:>10.2} {:>10.2} {:>6}",
            c.protocol,
            c.ntest.to_string(),
            100.0 * c.mean_eer,
            100.0 * c.std_eer,
            c.iterations
        );
    }
    println!("report written to {}", args.out_dir.display());
    Ok(())
}

fn dump_scalogram(args: DumpArgs, cfg: &RunConfig) -> Result<()> {
    let state: State = args.state.parse()?;
    let entry = ManifestEntry {
        file: args.recording.clone(),
        subject: "probe".into(),
        session: "probe".into(),
        state,
        fs: args.fs,
    };
    let rec = io::read_recording_csv(&args.recording, &entry)?;
    let segments = preprocess::preprocess(&rec, cfg)?;
    let segment = segments.get(args.segment_index).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "segment index {} out of range; recording has {} averaged segments",
            args.segment_index,
            segments.len()
        ))
    })?;
    let grid = ScaleGrid::from_band(&cfg.features, rec.fs)?;
    let plan = CwtPlan::new(&grid, segment.values.len())?;
    let scalogram = plan.transform(&segment.values)?;
    std::fs::write(&args.out, io::scalogram_csv(&scalogram, grid.center_frequencies_hz()))?;
    println!(
        "wrote {} scales x {} samples to {}",
        scalogram.n_scales,
        scalogram.n_samples,
        args.out.display()
    );
    Ok(())
}
