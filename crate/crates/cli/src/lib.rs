//! `gdsnet`: synthetic corpus generation, preprocessing, cross-validated
//! training and tabulated reporting. Exit codes: 0 ok, 2 usage or config,
//! 3 I/O, 4 numeric failure.

pub mod config;
pub mod error;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gdsnet_models::ModelKind;
use gdsnet_tensor::vten;
use gdsnet_train::{clip_samples, run_experiment, Aggregation, ExperimentConfig, ExperimentReport, ExperimentSpec, Sample, StateFilter, Task};
use gdsnet_video::manifest::{load_clip_manifest, load_manifest, resolve, save_clip_manifest};
use gdsnet_video::synth::generate_corpus;
use gdsnet_video::{CenterSquare, FaceLocalizer, RawVideo, SidecarLocalizer};

pub use config::RunConfig;
pub use error::CliError;

/// Frame rate assumed for stored recordings.
pub const FPS: f32 = 30.0;

#[derive(Debug, Parser)]
#[command(name = "gdsnet", version, about = "Depression-severity video classifiers: data, training and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; every file a command writes goes here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, global = true, value_parser = parse_task)]
    pub task: Option<Task>,
    /// ON, OFF or both.
    #[arg(long, global = true, value_parser = parse_state)]
    pub state: Option<StateFilter>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: gdsnet_models::ModelError| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: gdsnet_train::TrainError| e.to_string())
}

fn parse_state(s: &str) -> Result<StateFilter, String> {
    s.parse().map_err(|e: gdsnet_train::TrainError| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: `videos/*.vten` plus `manifest.json`.
    Synth(SynthArgs),
    /// Localize, resize, equalize and segment every video into clips.
    Preprocess(PreprocessArgs),
    /// Cross-validated training and evaluation; writes `metrics.json`.
    Loso(LosoArgs),
    /// Combine metrics files into one table (text and CSV).
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Frames per video.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Comma-separated task numbers.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output frame side in pixels.
    #[arg(long)]
    pub side: Option<usize>,
    /// Frames after trimming or padding.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub clip_len: Option<usize>,
    #[arg(long)]
    pub no_equalize: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LosoArgs {
    /// Clip manifest written by `preprocess`.
    #[arg(long)]
    pub clips: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Use k subject-grouped folds instead of one fold per subject.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_parser = parse_aggregation)]
    pub aggregation: Option<Aggregation>,
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown aggregation `{s}`"))
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReportArgs {
    /// Metrics files from `loso`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cli.global, &cfg, a),
        Command::Preprocess(a) => cmd_preprocess(&cli.global, &cfg, a),
        Command::Loso(a) => cmd_loso(&cli.global, &cfg, a).map(|_| ()),
        Command::Report(a) => cmd_report(&cli.global, a).map(|_| ()),
    }
}

fn out_dir(g: &Global, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Usage("an output directory is required (--out)".into()))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cmd_synth(g: &Global, cfg: &RunConfig, a: &SynthArgs) -> Result<(), CliError> {
    let mut spec = cfg.synth.clone();
    spec.seed = g.seed.unwrap_or(cfg.seed);
    if let Some(n) = a.subjects {
        spec.n_subjects = n;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(l) = a.length {
        spec.length = l;
    }
    if let Some(n) = a.noise {
        spec.noise = n;
    }
    if let Some(t) = &a.tasks {
        spec.tasks = t.clone();
    }
    spec.validate()?;
    let dir = out_dir(g, cfg)?;
    let records = generate_corpus(&spec, &dir)?;
    println!("wrote {} videos of {} subjects to {}", records.len(), spec.n_subjects, dir.display());
    Ok(())
}

pub fn cmd_preprocess(g: &Global, cfg: &RunConfig, a: &PreprocessArgs) -> Result<(), CliError> {
    let mut pipe = cfg.data.pipeline.clone();
    if let Some(s) = a.side {
        pipe.side = s;
    }
    if let Some(l) = a.length {
        pipe.length = l;
    }
    if let Some(c) = a.clip_len {
        pipe.clip_len = c;
    }
    if a.no_equalize {
        pipe.equalize = false;
    }
    pipe.validate()?;
    let manifest = a
        .manifest
        .clone()
        .or_else(|| cfg.data.manifest.clone())
        .ok_or_else(|| CliError::Usage("a manifest is required (--manifest)".into()))?;
    if !manifest.exists() {
        return Err(CliError::Missing(vec![manifest]));
    }
    let records = load_manifest(&manifest)?;
    let sidecar = |v: &Path| v.with_extension("faces.json");
    let mut missing: Vec<PathBuf> = Vec::new();
    for r in &records {
        let v = resolve(&manifest, &r.video);
        if !v.is_file() {
            missing.push(v.clone());
        }
        if cfg.data.localizer == config::Localizer::Sidecar && !sidecar(&v).is_file() {
            missing.push(sidecar(&v));
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    let dir = out_dir(g, cfg)?;
    let clip_dir = dir.join("clips");
    fs::create_dir_all(&clip_dir).map_err(|e| CliError::Io(format!("{}: {e}", clip_dir.display())))?;
    let mut clips = Vec::new();
    for r in &records {
        let path = resolve(&manifest, &r.video);
        let frames = vten::read::<u8>(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let video = RawVideo::new(frames, FPS, r.source_id())
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let loc: Box<dyn FaceLocalizer> = match cfg.data.localizer {
            config::Localizer::Center => Box::new(CenterSquare),
            config::Localizer::Sidecar => Box::new(SidecarLocalizer::load(sidecar(&path))?),
        };
        for s in clip_samples(r, &video, loc.as_ref(), &pipe)? {
            let target = dir.join(&s.record.clip);
            vten::write(&target, &s.clip).map_err(|e| CliError::Io(format!("{}: {e}", target.display())))?;
            clips.push(s.record);
        }
    }
    save_clip_manifest(dir.join("clips.json"), &clips)?;
    println!("wrote {} clips from {} videos to {}", clips.len(), records.len(), dir.display());
    Ok(())
}

/// Loads every clip named by a clip manifest.
pub fn load_samples(manifest: &Path) -> Result<Vec<Sample>, CliError> {
    if !manifest.exists() {
        return Err(CliError::Missing(vec![manifest.into()]));
    }
    let records = load_clip_manifest(manifest)?;
    let missing: Vec<PathBuf> =
        records.iter().map(|r| resolve(manifest, &r.clip)).filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    records
        .into_iter()
        .map(|record| {
            let path = resolve(manifest, &record.clip);
            let clip = vten::read::<f32>(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(Sample { record, clip })
        })
        .collect()
}

pub fn cmd_loso(g: &Global, cfg: &RunConfig, a: &LosoArgs) -> Result<ExperimentReport, CliError> {
    let spec = ExperimentSpec {
        task: g.task.unwrap_or(cfg.experiment.task),
        state_filter: g.state.unwrap_or(cfg.experiment.state_filter),
        model: g.model.unwrap_or(cfg.model.name),
        aggregation: a.aggregation.unwrap_or(cfg.experiment.aggregation),
    };
    let mut train = cfg.train_config(spec.model)?;
    if let Some(e) = a.epochs {
        train.max_epochs = e;
        train.validate()?;
    }
    let clips = a
        .clips
        .clone()
        .or_else(|| cfg.data.clips.clone())
        .ok_or_else(|| CliError::Usage("a clip manifest is required (--clips)".into()))?;
    let dir = out_dir(g, cfg)?;
    let samples = load_samples(&clips)?;
    let exp = ExperimentConfig {
        model: cfg.model.config.clone(),
        train: Some(train),
        cv_folds: a.folds.or(cfg.experiment.cv_folds),
        seed: g.seed.unwrap_or(cfg.seed),
    };
    let report = run_experiment(&spec, &samples, &exp, Some(&dir.join("logs")))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write(&dir.join("metrics.json"), &json)?;
    let preds = serde_json::to_string_pretty(&report.predictions).expect("predictions serialize") + "\n";
    write(&dir.join("predictions.json"), &preds)?;
    print!("{}", render_text(std::slice::from_ref(&report)));
    Ok(report)
}

fn row(r: &ExperimentReport) -> [String; 6] {
    let pct = |v: f64| format!("{:.1}", 100.0 * v);
    [
        r.spec.model.to_string(),
        r.spec.label(),
        pct(r.accuracy),
        pct(r.precision_macro),
        pct(r.recall_macro),
        pct(r.f1_macro),
    ]
}

const HEADER: [&str; 6] = ["Model", "Experiment", "Acc", "Prec", "Rec", "F1"];

/// Aligned plain-text table, one row per report.
pub fn render_text(reports: &[ExperimentReport]) -> String {
    let rows: Vec<[String; 6]> = reports.iter().map(row).collect();
    let width: Vec<usize> =
        (0..6).map(|c| rows.iter().map(|r| r[c].len()).chain([HEADER[c].len()]).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = width[c]) } else { format!("{s:>w$}", w = width[c]) })
            .collect();
        let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
    };
    line(HEADER.to_vec(), &mut out);
    let _ = writeln!(out, "{}", width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-|-"));
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn render_csv(reports: &[ExperimentReport]) -> String {
    let mut out = HEADER.join(",") + "\n";
    for r in reports {
        out += &(row(r).join(",") + "\n");
    }
    out
}

pub fn cmd_report(g: &Global, a: &ReportArgs) -> Result<Vec<ExperimentReport>, CliError> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let r: ExperimentReport =
            serde_json::from_str(&text).map_err(|e| CliError::Config { path: p.clone(), msg: e.to_string() })?;
        reports.push(r);
    }
    reports.sort_by(|a, b| {
        let state = |f: StateFilter| [StateFilter::On, StateFilter::Off, StateFilter::Both].iter().position(|&s| s == f);
        let key = |r: &ExperimentReport| (r.spec.model, r.spec.task as u8, state(r.spec.state_filter));
        key(a).cmp(&key(b))
    });
    let text = render_text(&reports);
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        write(&dir.join("report.txt"), &text)?;
        write(&dir.join("report.csv"), &render_csv(&reports))?;
    }
    print!("{text}");
    Ok(reports)
}

/// Trainable parameters of each architecture at its published configuration,
/// with the relative gap to the reported total.
pub fn parameter_report(classes: usize) -> Result<Vec<(ModelKind, usize, f64)>, CliError> {
    ModelKind::ALL
        .iter()
        .map(|&k| {
            let n = gdsnet_models::zoo::full_scale_params(k, classes)?;
            Ok((k, n, n as f64 / k.reported_params() - 1.0))
        })
        .collect()
}
