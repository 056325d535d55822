//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytics::{build_report, render_text};
use crate::caption::{MockCaptionServer, MockConfig};
use crate::config::FileConfig;
use crate::error::Error;
use crate::fixtures::{build_acceptance_corpus, NO_CAPTION_MARKER, SIDECAR_FILE};
use crate::frame_io::{read_video, synth_video, Scene, SynthKind, VideoReader};
use crate::model::{parse_stage_list, validate_stage_order, PipelineConfig, Stage, VideoAsset};
use crate::motion::motion_profile;
use crate::orchestrator::{read_journal, run_pipeline, simulate, CurationHandler, Journal, SimulationConfig};
use crate::scene::detect_cuts_in_frames;

pub const CORPUS_CONFIG_FILE: &str = "vidcurate.toml";
const VIDEO_EXTENSIONS: [&str; 7] = ["mp4", "mkv", "avi", "mov", "webm", "m4v", "mpg"];

#[derive(Debug, Parser)]
#[command(name = "vidcurate", version, about = "Video curation pipeline")]
pub struct Cli {
    /// TOML file with [pipeline] and [adapters] tables.
    #[arg(long, global = true, env = "VIDCURATE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Outcome journal (JSON lines).
    #[arg(long, global = true, env = "VIDCURATE_JOURNAL")]
    pub journal: Option<PathBuf>,
    /// Freeze timestamps, worker ids and wall times; run single-threaded.
    #[arg(long, global = true, env = "VIDCURATE_DETERMINISTIC")]
    pub deterministic: bool,
    /// Comma-separated stage list, e.g. clip,dedup,ocr,motion,aesthetic,caption.
    #[arg(long, global = true, env = "VIDCURATE_STAGE_ORDER")]
    pub stage_order: Option<String>,
    /// Worker counts as stage=N; repeat or separate with commas.
    #[arg(long, global = true, env = "VIDCURATE_WORKERS", value_delimiter = ',')]
    pub workers: Vec<String>,
    #[arg(long, global = true, env = "VIDCURATE_FORMAT", value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register the videos of a directory in a spool file for a later run.
    Ingest {
        dir: PathBuf,
        /// Only these asset ids (file stems).
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        #[arg(long, default_value = "vidcurate-spool.jsonl")]
        spool: PathBuf,
    },
    /// Run the pipeline over a directory of videos or an ingest spool file.
    Run { source: PathBuf },
    /// Sleep-based throughput experiment.
    Simulate {
        /// Per-stage latencies in units, in pipeline order.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 3.0, 0.8, 1.2, 12.0])]
        latencies: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        batch: usize,
        /// Milliseconds per latency unit.
        #[arg(long, default_value_t = 0.5)]
        unit_ms: f64,
    },
    /// Pass rates, timings and caption statistics of a journal.
    Report,
    /// Write a synthetic RVID video.
    Synth(SynthArgs),
    /// Cut list and motion profile of one RVID video.
    Profile { file: PathBuf },
    /// Write the synthetic acceptance corpus with its sidecar and config.
    Corpus { dir: PathBuf },
    /// Serve the caption contract over HTTP until killed.
    MockCaptioner {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 84)]
        words: usize,
        /// Clip id substrings answered with an empty caption.
        #[arg(long, value_delimiter = ',')]
        skip: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 64)]
    pub height: u32,
    #[arg(long, default_value_t = 30)]
    pub frames: u32,
    #[command(subcommand)]
    pub kind: SynthCommand,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    Static {
        #[arg(long, default_value_t = 128)]
        luma: u8,
    },
    MovingSquare {
        #[arg(long, default_value_t = 16)]
        size: u32,
        #[arg(long, default_value_t = 8)]
        dx: i32,
    },
    /// Constant-luma scenes given as luma:frames, e.g. 0:30,255:30.
    Scenes {
        #[arg(value_delimiter = ',')]
        scenes: Vec<String>,
    },
    Noise {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parameter(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Ingest { dir, ids, spool } => cmd_ingest(cli, dir, ids, spool, out),
        Command::Run { source } => cmd_run(cli, source, out),
        Command::Simulate {
            latencies,
            batch,
            unit_ms,
        } => cmd_simulate(cli, latencies, *batch, *unit_ms, out),
        Command::Report => cmd_report(cli, out),
        Command::Synth(args) => cmd_synth(cli, args, out),
        Command::Profile { file } => cmd_profile(cli, file, out),
        Command::Corpus { dir } => cmd_corpus(dir, out),
        Command::MockCaptioner { addr, words, skip } => cmd_mock(addr, *words, skip, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes()).map_err(|e| Failure {
        code: 1,
        message: format!("stdout: {e}"),
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_config(cli: &Cli) -> std::result::Result<FileConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    apply_overrides(&mut cfg.pipeline, cli.stage_order.as_deref(), &cli.workers)?;
    Ok(cfg)
}

/// Flag values win over the file.
pub fn apply_overrides(
    pipeline: &mut PipelineConfig,
    stage_order: Option<&str>,
    workers: &[String],
) -> crate::error::Result<()> {
    if let Some(order) = stage_order {
        let order = parse_stage_list(order)?;
        validate_stage_order(&order)?;
        pipeline.stage_order = order;
    }
    for w in workers.iter().filter(|w| !w.trim().is_empty()) {
        let (stage, n) = w
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--workers expects stage=N, got '{w}'")))?;
        let stage: Stage = stage.parse()?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad worker count in '{w}'")))?;
        pipeline.workers.insert(stage, n);
    }
    pipeline.validate()
}

fn decode_to_rvid(template: &str, input: &Path, output: &Path) -> crate::error::Result<()> {
    let cmd = template
        .replace("{input}", &input.display().to_string())
        .replace("{output}", &output.display().to_string());
    let status = Process::new("sh")
        .arg("-c")
        .arg(&cmd)
        .status()
        .map_err(|e| Error::Command(format!("{cmd}: {e}")))?;
    if !status.success() {
        return Err(Error::Command(format!("{cmd}: exit {:?}", status.code())));
    }
    Ok(())
}

/// RVID files of `dir` (plus other video files converted with
/// `decode_command` into `decode_dir`), sorted by asset id.
fn scan_dir(
    dir: &Path,
    ids: &[String],
    decode: Option<(&str, &Path)>,
) -> std::result::Result<Vec<VideoAsset>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut assets = Vec::new();
    for path in paths {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        if !ids.is_empty() && !ids.contains(&stem) {
            continue;
        }
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        let rvid = if ext == "rvid" {
            path
        } else if VIDEO_EXTENSIONS.contains(&ext.as_str()) {
            let Some((template, out_dir)) = decode else {
                tracing::warn!(path = %path.display(), "skipping video without decode_command");
                continue;
            };
            std::fs::create_dir_all(out_dir).map_err(|e| Failure::from(Error::io(out_dir, e)))?;
            let target = out_dir.join(format!("{stem}.rvid"));
            decode_to_rvid(template, &path, &target)?;
            target
        } else {
            continue;
        };
        let reader = VideoReader::open(&rvid)?;
        assets.push(reader.header().to_asset(&stem, &rvid)?);
    }
    assets.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    Ok(assets)
}

fn decode_dir_for(anchor: &Path) -> PathBuf {
    let mut name = anchor.file_name().map(OsString::from).unwrap_or_else(|| "vidcurate".into());
    name.push(".decoded");
    anchor.with_file_name(name)
}

fn cmd_ingest(cli: &Cli, dir: &Path, ids: &[String], spool: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(cli)?;
    let decode_dir = decode_dir_for(spool);
    let decode = cfg.adapters.decode_command.as_deref().map(|t| (t, decode_dir.as_path()));
    let assets = scan_dir(dir, ids, decode)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(spool)
        .map_err(|e| Failure {
            code: 1,
            message: format!("cannot open queue spool {}: {e}", spool.display()),
        })?;
    for a in &assets {
        let mut line = serde_json::to_string(a).expect("serializable");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| Failure::from(Error::io(spool, e)))?;
    }
    emit(out, &format!("published {}\n", assets.len()))
}

fn read_spool(path: &Path) -> std::result::Result<Vec<VideoAsset>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut assets: Vec<VideoAsset> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let a: VideoAsset = serde_json::from_str(line)
            .map_err(|e| usage(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if !assets.iter().any(|b| b.asset_id == a.asset_id) {
            assets.push(a);
        }
    }
    Ok(assets)
}

fn cmd_run(cli: &Cli, source: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(cli)?;
    let journal_path = cli
        .journal
        .as_deref()
        .ok_or_else(|| usage("--journal is required for run"))?;
    let assets = if source.is_dir() {
        let decode_dir = decode_dir_for(journal_path);
        let decode = cfg.adapters.decode_command.as_deref().map(|t| (t, decode_dir.as_path()));
        scan_dir(source, &[], decode)?
    } else {
        read_spool(source)?
    };
    let journal = Journal::open(journal_path, cli.deterministic)?;
    let handler = CurationHandler::new(cfg.pipeline.clone(), assets.clone())
        .with_boxed_text_detector(cfg.adapters.text_detector()?)
        .with_boxed_aesthetic(cfg.adapters.aesthetic_scorer())
        .with_boxed_captioner(cfg.adapters.captioner());
    let ids: Vec<String> = assets.iter().map(|a| a.asset_id.clone()).collect();
    let journal = run_pipeline(&cfg.pipeline, Arc::new(handler), journal, &ids)?;
    let report = build_report(&journal.records());
    match cli.format {
        Format::Text => emit(out, &render_text(&report)),
        Format::Structured => emit(out, &json(&report)),
    }
}

fn cmd_report(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    let path = cli.journal.as_deref().ok_or_else(|| usage("--journal is required for report"))?;
    if !path.is_file() {
        return Err(usage(format!("journal {} not found", path.display())));
    }
    let report = build_report(&read_journal(path)?);
    match cli.format {
        Format::Text => emit(out, &render_text(&report)),
        Format::Structured => emit(out, &json(&report)),
    }
}

fn cmd_simulate(cli: &Cli, latencies: &[f64], batch: usize, unit_ms: f64, out: &mut dyn Write) -> CmdResult {
    if !(unit_ms > 0.0 && unit_ms.is_finite()) {
        return Err(usage("--unit-ms must be positive"));
    }
    let report = simulate(&SimulationConfig {
        latencies: latencies.to_vec(),
        unit: Duration::from_secs_f64(unit_ms / 1000.0),
        batch,
    })?;
    if cli.format == Format::Structured {
        return emit(out, &json(&report));
    }
    let a = &report.analytic;
    let mut text = format!(
        "analytic  sequential {:.4} pipelined {:.4} efficiency {:.4} bottleneck {}\n",
        a.t_sequential, a.t_pipelined, a.efficiency, a.bottleneck_stage
    );
    text.push_str(&format!(
        "measured  sequential {:.3}s pipelined {:.3}s ratio {:.4} (batch {batch}, {unit_ms} ms/unit)\n",
        report.measured_sequential, report.measured_pipelined, report.measured_ratio
    ));
    for (stage, secs) in &report.stage_seconds {
        text.push_str(&format!("  {:<10} {:.3}s\n", stage.as_str(), secs));
    }
    if let Some(j) = &report.journal_efficiency {
        text.push_str(&format!("journal   efficiency {:.4} bottleneck {}\n", j.efficiency, j.bottleneck_stage));
    }
    emit(out, &text)
}

fn parse_scenes(specs: &[String]) -> std::result::Result<Vec<Scene>, Failure> {
    specs
        .iter()
        .map(|s| {
            let (l, f) = s.split_once(':').ok_or_else(|| usage(format!("scene '{s}' is not luma:frames")))?;
            Ok(Scene {
                luma: l.trim().parse().map_err(|_| usage(format!("bad luma in '{s}'")))?,
                frames: f.trim().parse().map_err(|_| usage(format!("bad frame count in '{s}'")))?,
            })
        })
        .collect()
}

fn cmd_synth(cli: &Cli, args: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let (width, height, frames) = (args.width, args.height, args.frames);
    let kind = match &args.kind {
        SynthCommand::Static { luma } => SynthKind::Static {
            width,
            height,
            frames,
            luma: *luma,
        },
        SynthCommand::MovingSquare { size, dx } => SynthKind::moving_square(width, height, frames, *size, *dx),
        SynthCommand::Scenes { scenes } => SynthKind::SceneSequence {
            width,
            height,
            scenes: parse_scenes(scenes)?,
        },
        SynthCommand::Noise { seed } => SynthKind::Noise {
            width,
            height,
            frames,
            seed: *seed,
        },
    };
    let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("synthetic").to_string();
    let asset = synth_video(&kind, &stem, &args.out)?;
    match cli.format {
        Format::Structured => emit(out, &json(&asset)),
        Format::Text => emit(
            out,
            &format!(
                "wrote {} ({}x{}, {} frames)\n",
                args.out.display(),
                asset.width,
                asset.height,
                asset.frame_count
            ),
        ),
    }
}

#[derive(serde::Serialize)]
struct ProfileOutput {
    frames: u32,
    cut_points: Vec<u32>,
    motion_average: f64,
    motion_scores: Vec<f64>,
}

fn cmd_profile(cli: &Cli, file: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(cli)?.pipeline;
    let (header, frames) = read_video(file)?;
    let cuts = detect_cuts_in_frames("", &frames, cfg.cut_threshold, cfg.min_clip_frames)?;
    let profile = motion_profile(&file.display().to_string(), &frames, cfg.pix_diff_threshold)?;
    let p = ProfileOutput {
        frames: header.frame_count,
        cut_points: cuts.cut_points,
        motion_average: profile.average,
        motion_scores: profile.scores,
    };
    match cli.format {
        Format::Structured => emit(out, &json(&p)),
        Format::Text => {
            let scores: Vec<String> = p.motion_scores.iter().map(|s| format!("{s:.4}")).collect();
            emit(
                out,
                &format!(
                    "frames {}\ncuts {:?}\nmotion average {:.4}\nscores {}\n",
                    p.frames,
                    p.cut_points,
                    p.motion_average,
                    scores.join(" ")
                ),
            )
        }
    }
}

fn cmd_corpus(dir: &Path, out: &mut dyn Write) -> CmdResult {
    let corpus = build_acceptance_corpus(dir)?;
    let mut cfg = FileConfig::default();
    cfg.adapters.ocr_sidecar = Some(PathBuf::from(SIDECAR_FILE));
    cfg.adapters.caption_skip = vec![NO_CAPTION_MARKER.to_string()];
    let path = dir.join(CORPUS_CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Failure::from(Error::io(&path, e)))?;
    emit(
        out,
        &format!("wrote {} assets and {} to {}\n", corpus.assets.len(), CORPUS_CONFIG_FILE, dir.display()),
    )
}

fn cmd_mock(addr: &str, words: usize, skip: &[String], out: &mut dyn Write) -> CmdResult {
    let server = MockCaptionServer::start_on(
        addr,
        MockConfig {
            words,
            empty_for: skip.to_vec(),
            ..MockConfig::default()
        },
    )?;
    emit(out, &format!("serving captions on {}\n", server.endpoint()))?;
    let _ = out.flush();
    loop {
        std::thread::park();
    }
}
