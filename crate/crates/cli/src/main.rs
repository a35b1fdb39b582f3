use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use perfcal::eda::write_events;
use perfcal::emg::write_bursts;
use perfcal::pipeline::{
    files, load_channels, load_markers, process_session, run_calibrate, run_features,
    run_report, validate_session, ProcessedSession, RunConfig, TestRun,
};
use perfcal::synth::{
    self, gen_session, layout, write_channel_manifest, HrProfile, SeededBurst, SeededScr,
    StressProfile, SynthSpec,
};

const EXIT_VALIDATION: u8 = 3;
const EXIT_PROCESSING: u8 = 4;

fn defaults_help() -> String {
    format!(
        "Settings resolve as command-line flags, then the --config file, then these built-in defaults:\n\n{}",
        RunConfig::default().to_toml()
    )
}

/// Stress features and performance calibration from physiological recordings.
#[derive(Debug, Parser)]
#[command(name = "perfcal", version, after_long_help = defaults_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a channel manifest and markers file; warnings do not fail.
    Validate(InputArgs),
    /// Detect beats, SCR events and EMG bursts into --out.
    Process(ProcessArgs),
    /// Build the per-scenario and per-level feature table and slopes.
    Features(SessionArgs),
    /// Score the test logs, find the decrease level and write plots.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic session or a single synthetic channel.
    Synth(SynthArgs),
    /// Render report.md from the features and calibration outputs in --out.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Channel manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Scenario and level markers (JSON) [default: the built-in 4/4/4/5/3 minute schedule].
    #[arg(long)]
    markers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML run configuration; see --help for the full default file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => Ok(RunConfig::load(p)?),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Debug, Args)]
struct ProcessArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Markers (JSON) [default: the built-in schedule].
    #[arg(long)]
    markers: Option<PathBuf>,
    /// Directory written by `process` [default: --out].
    #[arg(long)]
    session: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl SessionArgs {
    fn processed(&self) -> Result<ProcessedSession> {
        let dir = self.session.as_deref().unwrap_or(&self.out);
        ProcessedSession::read(dir)
            .with_context(|| format!("reading processed session in {}", dir.display()))
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    config: ConfigArg,
    /// Stimulus plan (JSON); give one per test, each followed by its --log.
    #[arg(long, required = true)]
    plan: Vec<PathBuf>,
    /// Session log (JSONL) for the --plan in the same position.
    #[arg(long, required = true)]
    log: Vec<PathBuf>,
    /// Accuracy drop in percentage points that marks a decrease [default: 10].
    #[arg(long)]
    delta: Option<f64>,
    /// Accept a single-level dip without checking that it is sustained.
    #[arg(long)]
    no_sustain: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Ecg,
    Bvp,
    Gsr,
    Emg,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Whole-session profile: calm, paper-like or planted-<2..7>.
    #[arg(long, conflicts_with = "kind")]
    profile: Option<String>,
    /// Generate only this channel over --duration seconds.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Constant heart rate for --kind ecg|bvp, in bpm.
    #[arg(long, default_value_t = 60.0, requires = "kind")]
    hr: f64,
    /// Length of a single-channel recording, in seconds.
    #[arg(long, default_value_t = 60.0, requires = "kind")]
    duration: f64,
    /// Evenly spaced SCRs (gsr) or bursts (emg) to seed.
    #[arg(long, default_value_t = 0, requires = "kind")]
    events: usize,
    /// Signal-to-noise ratio in dB [default: noiseless].
    #[arg(long, requires = "kind")]
    snr: Option<f64>,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding the features and calibration outputs.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_validate(args: &InputArgs) -> Result<()> {
    let diag = validate_session(&args.manifest, args.markers.as_deref())?;
    for line in &diag.info {
        println!("{line}");
    }
    for w in &diag.warnings {
        println!("warning: {w}");
    }
    println!("ok");
    Ok(())
}

fn cmd_process(args: &ProcessArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let markers = load_markers(args.input.markers.as_deref())?;
    markers.validate()?;
    let ch = load_channels(&args.input.manifest)?;
    let processed = process_session(&ch, &markers, &cfg.process)?;
    processed.write(&args.out)?;
    let n = |v: Option<usize>| v.map_or_else(|| "skipped".to_string(), |n| n.to_string());
    println!(
        "ECG beats: {}, BVP beats: {}, SCR events: {}, EMG bursts: {}",
        n(processed.ecg_beats.as_ref().map(|b| b.len())),
        n(processed.bvp_beats.as_ref().map(|b| b.len())),
        n(processed.scr_events.as_ref().map(Vec::len)),
        n(processed.emg_bursts.as_ref().map(Vec::len)),
    );
    Ok(())
}

fn cmd_features(args: &SessionArgs) -> Result<()> {
    let markers = load_markers(args.markers.as_deref())?;
    markers.validate()?;
    let report = run_features(&args.processed()?, &markers, &args.out)?;
    println!(
        "{} feature rows written to {}",
        report.features.len(),
        args.out.join(files::FEATURES_CSV).display()
    );
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let mut cfg = args.config.load()?.calibration;
    if let Some(d) = args.delta {
        cfg.delta_pct = d;
    }
    if args.no_sustain {
        cfg.sustain = false;
    }
    cfg.validate()?;
    if args.plan.len() != args.log.len() {
        return Err(perfcal::Error::InvalidPlan(format!(
            "{} --plan but {} --log given",
            args.plan.len(),
            args.log.len()
        ))
        .into());
    }
    let runs = args
        .plan
        .iter()
        .zip(&args.log)
        .map(|(p, l)| TestRun::load(p, l))
        .collect::<perfcal::Result<Vec<_>>>()?;
    let markers = load_markers(args.session.markers.as_deref())?;
    let outcome = run_calibrate(&args.session.processed()?, &markers, &runs, &cfg, &args.session.out)?;
    let c = &outcome.calibration;
    let show = |v: Option<u8>| v.map_or_else(|| "no decrease".to_string(), |l| l.to_string());
    println!(
        "{}: Stroop decrease {} optimal {}; math decrease {} optimal {}",
        c.subject_id,
        show(c.stroop.decrease_level),
        show(c.stroop.optimal_level),
        show(c.math.decrease_level),
        show(c.math.optimal_level),
    );
    Ok(())
}

fn single_channel_spec(args: &SynthArgs, kind: Kind) -> Result<SynthSpec> {
    if !(args.duration > 0.0) {
        bail!(perfcal::Error::InvalidSpec("--duration must be positive".into()));
    }
    let n = args.events;
    let spacing = args.duration / (n as f64 + 1.0);
    let mut spec = SynthSpec {
        seed: args.seed,
        duration_s: args.duration,
        hr: HrProfile::constant(args.hr),
        ..Default::default()
    };
    match kind {
        Kind::Ecg => spec.ecg_snr_db = args.snr,
        Kind::Bvp => spec.bvp_snr_db = args.snr,
        Kind::Gsr => {
            spec.gsr_snr_db = args.snr;
            spec.gsr_events = (1..=n)
                .map(|k| SeededScr {
                    time_s: spacing * k as f64,
                    amplitude_us: 0.5,
                })
                .collect();
        }
        Kind::Emg => {
            spec.emg_bursts = (1..=n)
                .map(|k| SeededBurst {
                    start_s: spacing * k as f64 - 0.5,
                    end_s: spacing * k as f64 + 0.5,
                    amplitude_mv: 0.2,
                })
                .collect();
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn write_single_channel(args: &SynthArgs, kind: Kind) -> Result<()> {
    let spec = single_channel_spec(args, kind)?;
    let out = &args.out;
    let truth = out.join(layout::TRUTH_DIR);
    std::fs::create_dir_all(&truth).with_context(|| format!("creating {}", truth.display()))?;
    let subject = format!("synth-{kind:?}-{}", args.seed).to_lowercase();
    let series = match kind {
        Kind::Ecg | Kind::Bvp => {
            let (series, beats) = if matches!(kind, Kind::Ecg) {
                synth::gen_ecg(&spec)?
            } else {
                synth::gen_bvp(&spec)?
            };
            beats.write(&truth.join(layout::TRUTH_BEATS))?;
            series
        }
        Kind::Gsr => {
            let (series, events) = synth::gen_gsr(&spec)?;
            write_events(&events, &truth.join(layout::TRUTH_SCRS))?;
            series
        }
        Kind::Emg => {
            let (series, bursts) = synth::gen_emg(&spec)?;
            write_bursts(&bursts, &truth.join(layout::TRUTH_BURSTS))?;
            series
        }
    };
    write_channel_manifest(out, &subject, &[&series])?;
    println!(
        "{} samples of {} written to {}",
        series.len(),
        series.kind(),
        out.join(layout::channel_file(series.kind())).display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if let Some(kind) = args.kind {
        return write_single_channel(args, kind);
    }
    let profile = StressProfile::by_name(args.profile.as_deref().unwrap_or("paper-like"))?;
    let session = gen_session(&profile, args.seed)?;
    session.write(&args.out)?;
    println!("session {} written to {}", session.subject_id, args.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let path = run_report(&args.out)?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Process(a) => cmd_process(a),
        Command::Features(a) => cmd_features(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Validation errors (bad inputs) and processing errors get distinct codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<perfcal::Error>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_PROCESSING,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    info!("{cli:?}");
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
