//! `vpde`: dataset generation, diffusion training, inference, evaluation,
//! rollout, and PGM export, all driven by one JSON experiment config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/file error,
//! 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::{Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use vpde::container::{read_container, write_container};
use vpde::diffusion::{heun_sample, DiffusionConfig};
use vpde::eval::{autoregressive_rollout, evaluate_task};
use vpde::fields::{Family, FieldVideo, TaskKind, TaskSpec};
use vpde::hvdit::{load_checkpoint, HvditConfig, HvditModel};
use vpde::masks::{mask_for_task, MaskRng};
use vpde::solvers::{generate_dataset, generator_for, TrajectoryDataset};
use vpde::train::{fit, TrainConfig};
use vpde::VpdeError;

#[derive(Parser)]
#[command(name = "vpde", version, about = "PDE video diffusion pipeline")]
struct Cli {
    /// Worker threads; falls back to VPDE_THREADS, then the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a trajectory dataset (containers + manifest).
    GenData {
        /// PDE family: ns, wave, ac, or helmholtz.
        #[arg(long)]
        family: String,
        /// Number of trajectories.
        #[arg(long)]
        count: usize,
        /// Grid size (H = W).
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Frames per trajectory.
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },

    /// Train a model from a JSON experiment config.
    Train {
        /// Experiment config: sections {data, model, diffusion, train, task}.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints and logs.
        #[arg(long)]
        out: PathBuf,
        /// Resume from an earlier checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override train.steps from the config.
        #[arg(long)]
        steps: Option<u64>,
        /// Override train.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override train.batch from the config.
        #[arg(long)]
        batch: Option<usize>,
        /// Override train.lr from the config.
        #[arg(long)]
        lr: Option<f64>,
    },

    /// Reconstruct one trajectory from partial observations.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Ground-truth trajectory container.
        #[arg(long)]
        input: PathBuf,
        /// Task kind: continuous-sensors, forward-full, inverse-full,
        /// forward-partial, or inverse-partial.
        #[arg(long, default_value = "continuous-sensors")]
        task: String,
        /// Observation rate for rate-based tasks.
        #[arg(long, default_value_t = 0.03)]
        rate: f64,
        /// Conditioning frame for frame-based tasks (default: first frame
        /// for forward tasks, last frame for inverse tasks).
        #[arg(long)]
        frame: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output container path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Evaluate a checkpoint over a dataset manifest, writing a CSV table.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "continuous-sensors")]
        task: String,
        #[arg(long, default_value_t = 0.03)]
        rate: f64,
        #[arg(long)]
        frame: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Autoregressive forward rollout from the first frame of a container.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Container providing the initial frame.
        #[arg(long)]
        input: PathBuf,
        /// Number of sampled windows.
        #[arg(long, default_value_t = 4)]
        windows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output container path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Export one frame of a container as a binary PGM image.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Output PGM path; a min/max sidecar JSON is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Experiment config file: every section beyond `data` overlays the
/// corresponding library default.
#[derive(Debug, Deserialize)]
struct ExperimentConfig {
    data: DataSection,
    #[serde(default)]
    model: Option<serde_json::Value>,
    #[serde(default)]
    diffusion: Option<serde_json::Value>,
    #[serde(default)]
    train: Option<serde_json::Value>,
    /// Overrides train.task; either "unified" or {"single": {...}}.
    #[serde(default)]
    task: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DataSection {
    manifest: PathBuf,
}

/// Recursively overlay `over` onto `base` (objects merge, scalars replace).
fn merge_json(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Deserialize a section by overlaying user JSON onto a default value.
fn section<T: Serialize + serde::de::DeserializeOwned>(
    default: &T,
    over: Option<&serde_json::Value>,
) -> Result<T, VpdeError> {
    let mut value = serde_json::to_value(default)?;
    if let Some(o) = over {
        merge_json(&mut value, o);
    }
    Ok(serde_json::from_value(value)?)
}

fn parse_family(s: &str) -> Result<Family, VpdeError> {
    Family::parse(s)
        .ok_or_else(|| VpdeError::InvalidConfig(format!("unknown family \"{s}\"")))
}

fn parse_task(
    name: &str,
    rate: f64,
    frame: Option<usize>,
    frames: usize,
) -> Result<TaskSpec, VpdeError> {
    let kind = TaskKind::parse(name)
        .ok_or_else(|| VpdeError::InvalidConfig(format!("unknown task \"{name}\"")))?;
    let default_frame = match kind {
        TaskKind::InverseFull | TaskKind::InversePartial => frames.saturating_sub(1),
        _ => 0,
    };
    let rate = match kind {
        TaskKind::ForwardFull | TaskKind::InverseFull | TaskKind::Unrestricted => 1.0,
        _ => rate,
    };
    TaskSpec::new(kind, rate, frame.unwrap_or(default_frame))
}

fn load_model(path: &Path) -> Result<HvditModel, VpdeError> {
    load_checkpoint(path)?.into_model()
}

/// Masked conditioning values y = x0 * m as f64 arrays.
fn conditioning(
    x0: &Array4<f64>,
    task: &TaskSpec,
    seed: u64,
) -> Result<(Array4<f64>, Array3<f64>), VpdeError> {
    let (t, h, w, _) = x0.dim();
    let om = mask_for_task(t, h, w, task, &mut MaskRng::new(seed))?;
    let m = om.mask().mapv(|v| v as f64);
    let mut y = Array4::zeros(x0.dim());
    for ((ti, hi, wi, ci), v) in y.indexed_iter_mut() {
        *v = x0[[ti, hi, wi, ci]] * m[[ti, hi, wi]];
    }
    Ok((y, m))
}

fn write_prediction(
    out: &Path,
    pred: &Array4<f64>,
    template: &FieldVideo,
    seed: u64,
) -> Result<(), VpdeError> {
    let video = FieldVideo::new(
        pred.mapv(|v| v as f32),
        template.dt,
        template.dx,
        template.family,
        seed,
    )?;
    write_container(out, &video)
}

fn write_sidecar<T: Serialize>(out: &Path, meta: &T) -> Result<(), VpdeError> {
    let side = out.with_extension("json");
    std::fs::write(side, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

fn cmd_gen_data(
    family: &str,
    count: usize,
    size: usize,
    frames: usize,
    seed: u64,
    out: &Path,
) -> Result<(), VpdeError> {
    let family = parse_family(family)?;
    let gen = generator_for(family, size, frames)?;
    generate_dataset(&gen, count, seed, out)?;
    let echo = serde_json::json!({
        "family": family.as_str(),
        "count": count,
        "size": size,
        "frames": frames,
        "seed": seed,
    });
    std::fs::write(
        out.join("gen_config.json"),
        serde_json::to_string_pretty(&echo)?,
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config_path: &Path,
    out: &Path,
    resume: Option<&Path>,
    steps: Option<u64>,
    seed: Option<u64>,
    batch: Option<usize>,
    lr: Option<f64>,
) -> Result<(), VpdeError> {
    let text = std::fs::read_to_string(config_path)?;
    let exp: ExperimentConfig = serde_json::from_str(&text)?;

    let manifest_path = if exp.data.manifest.is_relative() {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&exp.data.manifest)
    } else {
        exp.data.manifest.clone()
    };
    let dataset = TrajectoryDataset::open(&manifest_path)?;
    let [t, h, w, c] = dataset.manifest.dims;

    let mut model_default = HvditConfig::desk_default();
    model_default.dims = (t, h, w);
    model_default.channels = c;
    let model_cfg: HvditConfig = section(&model_default, exp.model.as_ref())?;
    model_cfg.validate()?;
    let diffusion: DiffusionConfig = section(&DiffusionConfig::default(), exp.diffusion.as_ref())?;
    diffusion.validate()?;
    let mut train_cfg: TrainConfig = section(&TrainConfig::default(), exp.train.as_ref())?;
    if let Some(task) = &exp.task {
        train_cfg.task = serde_json::from_value(task.clone())?;
    }
    if let Some(v) = steps {
        train_cfg.steps = v;
    }
    if let Some(v) = seed {
        train_cfg.seed = v;
    }
    if let Some(v) = batch {
        train_cfg.batch = v;
    }
    if let Some(v) = lr {
        train_cfg.lr = v;
    }

    std::fs::create_dir_all(out)?;
    // echo the source config verbatim plus the fully resolved settings
    std::fs::write(out.join("config.json"), &text)?;
    let resolved = serde_json::json!({
        "data": { "manifest": manifest_path },
        "model": model_cfg,
        "diffusion": diffusion,
        "train": train_cfg,
    });
    std::fs::write(
        out.join("config_resolved.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;

    let mut model = HvditModel::new(model_cfg, diffusion, train_cfg.seed)?;
    let outcome = fit(&mut model, &dataset, &train_cfg, out, resume)?;
    println!(
        "trained {} steps, final loss {:.6}, checkpoint {}",
        outcome.steps_run,
        outcome.final_loss,
        outcome.final_checkpoint.display()
    );
    Ok(())
}

fn cmd_infer(
    checkpoint: &Path,
    input: &Path,
    task: &str,
    rate: f64,
    frame: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<(), VpdeError> {
    let model = load_model(checkpoint)?;
    let video = read_container(input)?;
    let x0 = video.to_f64();
    let spec = parse_task(task, rate, frame, x0.dim().0)?;
    let (y, m) = conditioning(&x0, &spec, seed)?;
    let pred = heun_sample(&model, &y, &m, &model.diffusion, seed)?;
    write_prediction(out, &pred, &video, seed)?;
    write_sidecar(
        out,
        &serde_json::json!({
            "task": spec.kind.as_str(),
            "rate": spec.rate,
            "frame": spec.frame,
            "seed": seed,
            "checkpoint": checkpoint,
            "input": input,
        }),
    )
}

fn cmd_eval(
    checkpoint: &Path,
    manifest: &Path,
    task: &str,
    rate: f64,
    frame: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<(), VpdeError> {
    let model = load_model(checkpoint)?;
    let dataset = TrajectoryDataset::open(manifest)?;
    let videos: Vec<Array4<f64>> = (0..dataset.len())
        .map(|i| dataset.load(i).map(|v| v.to_f64()))
        .collect::<Result<_, _>>()?;
    let spec = parse_task(task, rate, frame, dataset.manifest.dims[0])?;
    let report = evaluate_task(&model, &model.diffusion, &videos, &spec, seed, &[seed])?;
    report.write_csv(out)?;
    println!(
        "evaluated {} trajectories: err_all {:.6}, err_unobserved {:.6}",
        report.rows.len(),
        report.mean_err_all(),
        report.mean_err_unobserved()
    );
    Ok(())
}

fn cmd_rollout(
    checkpoint: &Path,
    input: &Path,
    windows: usize,
    seed: u64,
    out: &Path,
) -> Result<(), VpdeError> {
    let model = load_model(checkpoint)?;
    let video = read_container(input)?;
    let x = video.to_f64();
    let initial = x.slice(ndarray::s![0..1, .., .., ..]).to_owned();
    let window_frames = model.cfg.dims.0;
    let pred =
        autoregressive_rollout(&model, &model.diffusion, window_frames, &initial, windows, seed)?;
    write_prediction(out, &pred, &video, seed)?;
    write_sidecar(
        out,
        &serde_json::json!({
            "windows": windows,
            "window_frames": window_frames,
            "frames": pred.dim().0,
            "seed": seed,
            "checkpoint": checkpoint,
            "input": input,
        }),
    )
}

fn cmd_render(input: &Path, frame: usize, channel: usize, out: &Path) -> Result<(), VpdeError> {
    let video = read_container(input)?;
    let (t, h, w, c) = video.dims();
    if frame >= t {
        return Err(VpdeError::FrameOutOfRange { frame, frames: t });
    }
    if channel >= c {
        return Err(VpdeError::FrameOutOfRange { frame: channel, frames: c });
    }
    let slice = video.data().index_axis(Axis(0), frame);
    let min = slice
        .index_axis(Axis(2), channel)
        .iter()
        .fold(f32::INFINITY, |a, &b| a.min(b)) as f64;
    let max = slice
        .index_axis(Axis(2), channel)
        .iter()
        .fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let constant = min == max;
    let mut bytes = Vec::with_capacity(h * w);
    for r in 0..h {
        for col in 0..w {
            let v = slice[[r, col, channel]] as f64;
            let g = if constant { 128 } else { ((v - min) / (max - min) * 255.0).round() as u8 };
            bytes.push(g);
        }
    }
    let mut pgm = format!("P5\n{w} {h}\n255\n").into_bytes();
    pgm.extend_from_slice(&bytes);
    std::fs::write(out, pgm)?;
    write_sidecar(
        out,
        &serde_json::json!({
            "frame": frame,
            "channel": channel,
            "min": min,
            "max": max,
            "constant": constant,
        }),
    )
}

fn exit_code(e: &VpdeError) -> u8 {
    use VpdeError::*;
    match e {
        InvalidConfig(_) | ConfigMismatch(_) | Json(_) | RateOutOfRange(_) | BadGridSize(_)
        | IndivisibleDims(_) | ZeroSigma | VersionUnsupported(_) => 2,
        Io(_) | BadMagic(_) | PayloadLengthMismatch { .. } | BadHeader(_)
        | ShapeMismatch { .. } | FrameOutOfRange { .. } | ZeroNormTruth => 3,
        CflViolation(_) | NonFiniteState { .. } | ResonantAlpha { .. } | NonFiniteLoss { .. }
        | NonFiniteOutput => 4,
    }
}

fn run(cli: Cli) -> Result<(), VpdeError> {
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("VPDE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(num_threads_default);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| VpdeError::InvalidConfig(format!("thread pool: {e}")))?;

    match cli.cmd {
        Cmd::GenData { family, count, size, frames, seed, out } => {
            cmd_gen_data(&family, count, size, frames, seed, &out)
        }
        Cmd::Train { config, out, resume, steps, seed, batch, lr } => {
            cmd_train(&config, &out, resume.as_deref(), steps, seed, batch, lr)
        }
        Cmd::Infer { checkpoint, input, task, rate, frame, seed, out } => {
            cmd_infer(&checkpoint, &input, &task, rate, frame, seed, &out)
        }
        Cmd::Eval { checkpoint, manifest, task, rate, frame, seed, out } => {
            cmd_eval(&checkpoint, &manifest, &task, rate, frame, seed, &out)
        }
        Cmd::Rollout { checkpoint, input, windows, seed, out } => {
            cmd_rollout(&checkpoint, &input, windows, seed, &out)
        }
        Cmd::Render { input, frame, channel, out } => cmd_render(&input, frame, channel, &out),
    }
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
