//! Command-line interface: synthetic data generation, tracking, the
//! damped-least-squares baseline, and the Monte Carlo occlusion study.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix3;

use markertrack::baseline::{run_baseline, BaselineConfig};
use markertrack::eval::{metrics_for_run, run_montecarlo};
use markertrack::io;
use markertrack::kinematics::{bundled_model, load_model, KinematicModel};
use markertrack::synth::{apply_occlusion, bundled_script, generate_truth, OcclusionConfig};
use markertrack::tracker::{track, SampleSource, TrackerConfig};

#[derive(Parser)]
#[command(
    name = "markertrack",
    about = "Articulated pose tracking from labeled 3D markers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic marker frames (and ground-truth poses) from a
    /// bundled motion script.
    Synth(SynthArgs),
    /// Track a marker-frame file and write pose trajectory and metrics.
    Track(TrackArgs),
    /// Fit each frame independently with damped least squares.
    Baseline(BaselineArgs),
    /// Monte Carlo occlusion study over many randomized runs.
    Montecarlo(MontecarloArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Bundled model name (`minimal_1dof`, `humanoid40`) or a model file path.
    #[arg(long)]
    model: String,
    /// Bundled script name: `sine_sweep_40dof` or `root_excursion`.
    #[arg(long, default_value = "sine_sweep_40dof")]
    script: String,
    /// Output marker-frames file.
    #[arg(long)]
    out: PathBuf,
    /// Optional ground-truth pose file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Isotropic marker noise variance, mm^2.
    #[arg(long, default_value_t = 1e-4)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hide markers with `p=<prob>,lambda=<frames>`.
    #[arg(long)]
    occlusion: Option<String>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    model: String,
    /// Input marker-frames file.
    #[arg(long)]
    frames: PathBuf,
    /// Output pose-trajectory file.
    #[arg(long)]
    out: PathBuf,
    /// Output per-frame metrics file.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Sample source: `unscented` or `smart:<count>`.
    #[arg(long)]
    samples: Option<String>,
    /// Seed for the smart sample set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Configuration file overriding noise/init defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Levenberg damping parameter.
    #[arg(long, default_value_t = 1e-2)]
    damping: f64,
    /// Iteration cap per frame.
    #[arg(long, default_value_t = 50)]
    iterations: usize,
}

#[derive(Args)]
struct MontecarloArgs {
    #[arg(long)]
    model: String,
    /// Clean (fully visible) marker-frames file.
    #[arg(long)]
    frames: PathBuf,
    /// Number of randomized runs.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Occlusion parameters, `p=<prob>,lambda=<frames>`.
    #[arg(long, default_value = "p=0.005,lambda=100")]
    occlusion: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output per-frame envelope file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn resolve_model(spec: &str) -> Result<KinematicModel> {
    let text = match bundled_model(spec) {
        Some(text) => text.to_string(),
        None => std::fs::read_to_string(spec)
            .with_context(|| format!("reading model file `{spec}`"))?,
    };
    load_model(&text).with_context(|| format!("loading model `{spec}`"))
}

fn parse_samples(spec: &str, seed: u64) -> Result<SampleSource> {
    if spec == "unscented" {
        return Ok(SampleSource::Unscented { kappa: None });
    }
    if let Some(count) = spec.strip_prefix("smart:") {
        let count: usize = count
            .parse()
            .with_context(|| format!("bad sample count in `{spec}`"))?;
        return Ok(SampleSource::Smart { count, seed });
    }
    bail!("unknown sample source `{spec}` (use `unscented` or `smart:<count>`)");
}

fn parse_occlusion(spec: &str, seed: u64) -> Result<OcclusionConfig> {
    let mut p = None;
    let mut lambda = None;
    for part in spec.split(',') {
        match part.split_once('=') {
            Some(("p", v)) => p = Some(v.parse::<f64>().context("bad occlusion p")?),
            Some(("lambda", v)) => {
                lambda = Some(v.parse::<f64>().context("bad occlusion lambda")?)
            }
            _ => bail!("occlusion spec must look like `p=0.005,lambda=100`"),
        }
    }
    let (Some(hide_probability), Some(mean_hidden_frames)) = (p, lambda) else {
        bail!("occlusion spec must set both p and lambda");
    };
    Ok(OcclusionConfig {
        hide_probability,
        mean_hidden_frames,
        seed,
    })
}

fn tracker_config(
    model: &KinematicModel,
    config_path: Option<&Path>,
    samples: Option<&str>,
    seed: u64,
) -> Result<TrackerConfig> {
    let mut config = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config `{}`", path.display()))?;
            io::load_config(&text)?.tracker_config(model)?
        }
        None => TrackerConfig::defaults(model),
    };
    if let Some(spec) = samples {
        config.samples = parse_samples(spec, seed)?;
    } else if let SampleSource::Smart { count, .. } = config.samples {
        config.samples = SampleSource::Smart { count, seed };
    }
    Ok(config)
}

fn read_frames_checked(path: &Path) -> Result<Vec<markertrack::tracker::MarkerFrame>> {
    let frames =
        io::read_frames_csv(path).with_context(|| format!("reading `{}`", path.display()))?;
    if frames.is_empty() {
        bail!("no frames in `{}`", path.display());
    }
    Ok(frames)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let script = bundled_script(&args.script, &model)
        .with_context(|| format!("unknown script `{}`", args.script))?;
    let poses = generate_truth(&script, &model)?;
    let noise = Matrix3::identity() * args.noise;
    let mut frames =
        markertrack::synth::render_markers(&poses, &model, &noise, script.rate_hz, args.seed)?;
    if let Some(spec) = &args.occlusion {
        let occlusion = parse_occlusion(spec, args.seed)?;
        frames = apply_occlusion(&frames, &occlusion)?;
    }
    io::write_frames_csv(&args.out, &frames)?;
    if let Some(truth) = &args.truth {
        let rows: Vec<_> = poses
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 / script.rate_hz, p.clone()))
            .collect();
        io::write_poses_csv(truth, &rows)?;
    }
    println!(
        "wrote {} frames ({} markers) to {}",
        frames.len(),
        model.marker_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_track(args: TrackArgs) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let frames = read_frames_checked(&args.frames)?;
    let config = tracker_config(&model, args.config.as_deref(), args.samples.as_deref(), args.seed)?;
    let tracked = track(&frames, &model, config)?;

    let rows: Vec<_> = tracked
        .iter()
        .zip(&frames)
        .map(|(t, f)| (f.timestamp, t.pose.clone()))
        .collect();
    io::write_poses_csv(&args.out, &rows)?;

    let records = metrics_for_run(&model, &tracked, &frames)?;
    if let Some(path) = &args.metrics {
        io::write_metrics_csv(path, &records)?;
    }

    let settled: Vec<f64> = records
        .iter()
        .skip(20)
        .map(|r| r.avg_marker_dist_mm)
        .collect();
    let mean_dist = settled.iter().sum::<f64>() / settled.len().max(1) as f64;
    let max_runtime = records.iter().map(|r| r.runtime_s).fold(0.0, f64::max);
    println!("tracked {} frames", tracked.len());
    println!("mean marker distance after frame 20: {mean_dist:.3} mm");
    println!("max step runtime: {:.2} ms", max_runtime * 1e3);
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let frames = read_frames_checked(&args.frames)?;
    let config = BaselineConfig {
        damping: args.damping,
        max_iterations: args.iterations,
        ..BaselineConfig::default()
    };
    let (fits, records) = run_baseline(&frames, &model, &config)?;
    let rows: Vec<_> = fits
        .iter()
        .zip(&frames)
        .map(|(fit, f)| (f.timestamp, fit.pose.clone()))
        .collect();
    io::write_poses_csv(&args.out, &rows)?;
    if let Some(path) = &args.metrics {
        io::write_metrics_csv(path, &records)?;
    }
    let settled: Vec<f64> = records
        .iter()
        .skip(20)
        .map(|r| r.avg_marker_dist_mm)
        .collect();
    let mean_dist = settled.iter().sum::<f64>() / settled.len().max(1) as f64;
    let diverged = fits.iter().filter(|f| f.diverged).count();
    println!("fitted {} frames ({diverged} diverged)", fits.len());
    println!("mean marker distance after frame 20: {mean_dist:.3} mm");
    Ok(())
}

fn cmd_montecarlo(args: MontecarloArgs) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let frames = read_frames_checked(&args.frames)?;
    let config = tracker_config(&model, args.config.as_deref(), args.samples.as_deref(), args.seed)?;
    let occlusion = parse_occlusion(&args.occlusion, args.seed)?;
    let summary = run_montecarlo(
        &model,
        &frames,
        &config,
        occlusion.hide_probability,
        occlusion.mean_hidden_frames,
        args.runs,
        args.seed,
    )?;
    io::write_montecarlo_csv(&args.out, &summary)?;
    let envelope_max = summary
        .per_frame
        .iter()
        .skip(25)
        .map(|f| f.dist_max_mm)
        .fold(0.0, f64::max);
    println!("montecarlo: {} runs over {} frames", summary.runs, frames.len());
    println!(
        "mean hidden markers: {:.2} of {}",
        summary.mean_hidden_markers,
        model.marker_count()
    );
    println!("envelope max after frame 25: {envelope_max:.3} mm");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Synth(args) => cmd_synth(args),
        Command::Track(args) => cmd_track(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
    }
}
