//! `qtrack` command line: run the association engine over detection files,
//! evaluate track files against ground truth, generate synthetic scenarios,
//! and verify the numerical core.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qtrack_core::error::Error as CoreError;
use qtrack_core::eval::{track_map_videos, EvalReport};
use qtrack_core::io;
use qtrack_core::simgen::{generate_scenario, DetectorNoise, ScenarioConfig};
use qtrack_core::tracker::track_video;
use qtrack_core::{selfcheck, FrameSize};

use config::{ConfigFile, EngineOverrides};

#[derive(Parser)]
#[command(name = "qtrack", version, about = "Video-instance association engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Associate detections into identity tracks.
    Track(TrackArgs),
    /// Evaluate predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic detection stream with ground truth.
    Simulate(SimulateArgs),
    /// Run the built-in numerical verification suites.
    Selfcheck,
}

#[derive(Args)]
struct TrackArgs {
    /// Detection file to read.
    #[arg(long)]
    input: PathBuf,
    /// Track file to write.
    #[arg(long)]
    output: PathBuf,
    /// JSON config file; individual flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: EngineOverrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted track file(s); pair with --gt by video id.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth track file(s).
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// Evaluate videos in parallel with this many workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long, default_value_t = 36)]
    frames: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Gaussian embedding noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 360)]
    height: u32,
    /// Uniform box jitter amplitude in pixels.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Per-frame probability of one spurious detection.
    #[arg(long, default_value_t = 0.0)]
    fp_rate: f64,
    #[arg(long, default_value_t = 0.8)]
    score_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    score_hi: f64,
    /// Occlusion window `object:first:last` (repeatable).
    #[arg(long)]
    occlude: Vec<String>,
    /// Skip rasterized masks.
    #[arg(long)]
    no_masks: bool,
    /// Detection file to write.
    #[arg(long)]
    out_det: PathBuf,
    /// Ground-truth file to write.
    #[arg(long)]
    out_gt: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QTRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let code = err
                .downcast_ref::<CoreError>()
                .map_or("E_RUNTIME", |e| e.code());
            eprintln!("error[{code}]: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Track(args) => cmd_track(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Selfcheck => cmd_selfcheck(),
    }
}

fn cmd_track(args: TrackArgs) -> Result<ExitCode> {
    let config = match &args.config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            ConfigFile::parse(&bytes)?
        }
        None => ConfigFile::default(),
    };
    let assoc = config.assoc_config(&args.overrides);
    let matcher = config.matcher_params(&args.overrides);
    log::debug!("association config: {assoc:?}");
    log::debug!(
        "matcher params: {matcher:?}, loss reduction {:?}",
        config.loss_reduction()
    );

    let bytes = std::fs::read(&args.input)
        .with_context(|| format!("reading detections {}", args.input.display()))?;
    let det_file = io::parse_detection_file(&bytes)?;
    let frames = io::detection_file_to_frames(&det_file)?;
    let tracks = track_video(&frames, &assoc)?;
    log::info!(
        "tracked {} frames into {} identities",
        frames.len(),
        tracks.len()
    );

    let track_file = io::tracks_to_file(&det_file.video_id, &tracks);
    std::fs::write(&args.output, io::serialize_track_file(&track_file))
        .with_context(|| format!("writing tracks {}", args.output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn read_video(path: &PathBuf) -> Result<(String, io::TrackFile)> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading track file {}", path.display()))?;
    let file = io::parse_track_file(&bytes)?;
    Ok((file.video_id.clone(), file))
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let mut preds = std::collections::BTreeMap::new();
    for path in &args.pred {
        let (video_id, file) = read_video(path)?;
        if preds.insert(video_id.clone(), file).is_some() {
            bail!("duplicate prediction file for video {video_id}");
        }
    }
    let mut gts = std::collections::BTreeMap::new();
    for path in &args.gt {
        let (video_id, file) = read_video(path)?;
        if gts.insert(video_id.clone(), file).is_some() {
            bail!("duplicate ground-truth file for video {video_id}");
        }
    }
    for video_id in gts.keys() {
        if !preds.contains_key(video_id) {
            bail!("no prediction file for video {video_id}");
        }
    }

    // Pair by video id in sorted order; unmatched predictions are an error.
    let mut pairs = Vec::new();
    for (video_id, pred_file) in &preds {
        let gt_file = gts
            .get(video_id)
            .with_context(|| format!("no ground-truth file for video {video_id}"))?;
        pairs.push((
            video_id.clone(),
            io::track_file_to_preds(pred_file)?,
            io::track_file_to_gts(gt_file)?,
        ));
    }

    let videos: Vec<_> = if args.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .context("building worker pool")?;
        pool.install(|| {
            pairs
                .par_iter()
                .map(|(id, p, g)| {
                    track_map_videos(&[(p.clone(), g.clone())]).map(|r| (id.clone(), r))
                })
                .collect::<qtrack_core::Result<Vec<_>>>()
        })?
    } else {
        pairs
            .iter()
            .map(|(id, p, g)| track_map_videos(&[(p.clone(), g.clone())]).map(|r| (id.clone(), r)))
            .collect::<qtrack_core::Result<Vec<_>>>()?
    };

    let pooled = track_map_videos(
        &pairs
            .into_iter()
            .map(|(_, p, g)| (p, g))
            .collect::<Vec<_>>(),
    )?;

    print_report_table(&videos, &pooled);
    println!("{}", serde_json::to_string(&pooled)?);
    Ok(ExitCode::SUCCESS)
}

fn print_report_table(videos: &[(String, EvalReport)], pooled: &EvalReport) {
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "video", "AP", "AP50", "AP75", "AR1", "AR10", "IDsw"
    );
    let row = |name: &str, r: &EvalReport| {
        println!(
            "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6}",
            name, r.ap, r.ap50, r.ap75, r.ar1, r.ar10, r.id_switches
        );
    };
    if videos.len() > 1 {
        for (video_id, report) in videos {
            row(video_id, report);
        }
    }
    row("ALL", pooled);
}

fn parse_occlusions(specs: &[String]) -> Result<Vec<(usize, u64, u64)>> {
    specs
        .iter()
        .map(|spec| {
            let parts: Vec<&str> = spec.split(':').collect();
            if parts.len() != 3 {
                bail!("occlusion spec `{spec}` is not object:first:last");
            }
            Ok((
                parts[0].parse().context("occlusion object index")?,
                parts[1].parse().context("occlusion first frame")?,
                parts[2].parse().context("occlusion last frame")?,
            ))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let cfg = ScenarioConfig {
        num_objects: args.objects,
        num_frames: args.frames,
        frame: FrameSize {
            width: args.width,
            height: args.height,
        },
        num_classes: args.classes,
        embedding_dim: args.dim,
        embedding_noise_sigma: args.sigma,
        velocities: None,
        occlusions: parse_occlusions(&args.occlude)?,
        detector_noise: DetectorNoise {
            box_jitter: args.jitter,
            score_range: (args.score_lo, args.score_hi),
            false_positive_rate: args.fp_rate,
        },
        with_masks: !args.no_masks,
    };
    let scenario = generate_scenario(&cfg, args.seed)?;

    let det_file = io::scenario_to_detection_file(&scenario);
    std::fs::write(&args.out_det, io::serialize_detection_file(&det_file))
        .with_context(|| format!("writing detections {}", args.out_det.display()))?;
    let gt_file = io::scenario_to_gt_file(&scenario);
    std::fs::write(&args.out_gt, io::serialize_track_file(&gt_file))
        .with_context(|| format!("writing ground truth {}", args.out_gt.display()))?;

    let total: usize = scenario.frames.iter().map(|(_, d)| d.len()).sum();
    println!(
        "wrote {} detections over {} frames, {} ground-truth tracks (seed {})",
        total,
        scenario.frames.len(),
        scenario.gt_tracks.len(),
        scenario.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_selfcheck() -> Result<ExitCode> {
    let results = selfcheck::run_all()?;
    let mut all_passed = true;
    for suite in &results {
        let status = if suite.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {}: {}", suite.name, suite.detail);
        all_passed &= suite.passed;
    }
    if all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}
