//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`; failures panic with details).

use std::path::Path;
use std::process::Command;

use ndarray::{Array2, Array3, Array4, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use vpde::container::{read_container, write_container};
use vpde::diffusion::{consistent_heun_sample, heun_sample, karras_sigma_steps, Denoiser, DiffusionConfig};
use vpde::eval::autoregressive_rollout;
use vpde::fftutil::{fft2_real, freq, ifft2_to_real};
use vpde::fields::{Family, FieldVideo, TaskSpec};
use vpde::hvdit::{load_checkpoint, save_checkpoint, HvditConfig, HvditModel};
use vpde::masks::{continuous_sensor_mask, sample_unified_task, MaskRng};
use vpde::solvers::allen_cahn::{simulate_allen_cahn, AcConfig};
use vpde::solvers::helmholtz::{helmholtz_residual, solve_helmholtz_grid, HelmholtzConfig};
use vpde::solvers::ns::{simulate_ns, Forcing, NsConfig};
use vpde::solvers::wave::{WaveLayerConfig, WaveState};
use vpde::solvers::{generate_dataset, FamilyGenerator, TrajectoryDataset};
use vpde::stats::{chi_square_uniform, ks_p_value, ks_statistic_normal, CHI_SQ_5DF_99};
use vpde::train::{candidate_seeds, fit, TaskMixture, TrainConfig};
use vpde::{relative_l2, relative_l2_masked, Result};

fn report(criterion: &str, ok: bool, detail: &str) {
    // write straight to the real stdout so the verdict lines survive the
    // harness's per-test output capture
    use std::io::Write;
    let mut out = std::io::stdout();
    writeln!(out, "criterion {criterion}: {}", if ok { "PASS" } else { "FAIL" }).unwrap();
    out.flush().unwrap();
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn grf32(seed: u64) -> Array2<f64> {
    vpde::grf::sample_grf_grid(&vpde::grf::GrfSpec::new(32, seed)).unwrap()
}

// ---------------------------------------------------------------- criterion 1

fn ns_single_mode_decay() -> f64 {
    let n = 64;
    let cfg = NsConfig::new(1e-3, Forcing::None, n, 5e-3, 2, 200).unwrap();
    let w0_grid = Array4::from_shape_fn((1, n, n, 1), |(_, _, c, _)| {
        (2.0 * std::f64::consts::PI * 4.0 * c as f64 / n as f64).cos() as f32
    });
    let w0 = FieldVideo::new(w0_grid, 0.0, 1.0 / n as f64, Family::NavierStokes, 0).unwrap();
    let out = simulate_ns(&cfg, &w0).unwrap();
    let decay = (-1e-3 * (8.0 * std::f64::consts::PI).powi(2)).exp();
    let expected = w0.to_f64().mapv(|v| v * decay);
    let got = out
        .to_f64()
        .index_axis(Axis(0), 1)
        .to_owned()
        .insert_axis(Axis(0));
    relative_l2(&got, &expected, None).unwrap()
}

fn allen_cahn_heat_limit() -> f64 {
    let n = 32;
    let steps = 500usize;
    let dt = 2e-4;
    let cfg = AcConfig::new(0.0, n, dt, 2, steps).unwrap();
    let u0_grid = grf32(3);
    let u0_video = FieldVideo::new(
        Array4::from_shape_fn((1, n, n, 1), |(_, r, c, _)| u0_grid[[r, c]] as f32),
        dt,
        1.0 / n as f64,
        Family::AllenCahn,
        3,
    )
    .unwrap();
    let out = simulate_allen_cahn(&cfg, &u0_video).unwrap();
    // exact heat decay of the f32-quantized initial condition
    let u0_f32 = Array2::from_shape_fn((n, n), |(r, c)| {
        out.data()[[0, r, c, 0]] as f64
    });
    let t_final = dt * steps as f64;
    let mut spec = fft2_real(&u0_f32);
    for ((r, c), v) in spec.indexed_iter_mut() {
        let scale = 2.0 * std::f64::consts::PI;
        let ky = freq(r, n) as f64 * scale;
        let kx = freq(c, n) as f64 * scale;
        *v *= (-(kx * kx + ky * ky) * t_final).exp();
    }
    let exact = ifft2_to_real(&spec);
    let got = Array2::from_shape_fn((n, n), |(r, c)| out.data()[[1, r, c, 0]] as f64);
    let num: f64 = got.iter().zip(exact.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}

fn helmholtz_eigenfunction_errors() -> (f64, f64) {
    let n = 64;
    let cfg = HelmholtzConfig::desk_default(n, 0);
    let (j, k) = (2usize, 3usize);
    let lambda = cfg.eigenvalue(j, k);
    let h = 1.0 / (n + 1) as f64;
    let pi = std::f64::consts::PI;
    let u = Array2::from_shape_fn((n, n), |(r, c)| {
        (pi * (j + 1) as f64 * (r + 1) as f64 * h).sin()
            * (pi * (k + 1) as f64 * (c + 1) as f64 * h).sin()
    });
    let a = u.mapv(|v| (cfg.alpha * cfg.alpha - lambda) * v);
    let solved = solve_helmholtz_grid(&cfg, &a).unwrap();
    let num: f64 = solved.iter().zip(u.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = u.iter().map(|v| v * v).sum();
    ((num / den).sqrt(), helmholtz_residual(&cfg, &solved, &a))
}

fn wave_reversibility_error() -> f64 {
    let n = 64;
    let cfg = WaveLayerConfig::desk_default(n, 2);
    let dt = cfg.dt_solver;
    let dx = 1.0 / n as f64;
    let speed_sq = Array2::from_elem((n, n), 0.8f64 * 0.8);
    let sponge = Array2::zeros((n, n));
    let u0 = Array2::from_shape_fn((n, n), |(r, c)| {
        let dy = r as f64 / n as f64 - 0.5;
        let dxr = c as f64 / n as f64 - 0.45;
        (-(dxr * dxr + dy * dy) / (2.0 * 0.06f64.powi(2))).exp()
    });
    let mut state = WaveState { u: u0.clone(), v: Array2::zeros((n, n)) };
    for _ in 0..200 {
        state.step_forward(&speed_sq, &sponge, dt, dx);
    }
    for _ in 0..200 {
        state.step_backward(&speed_sq, dt, dx);
    }
    let num: f64 = state.u.iter().zip(u0.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = u0.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}

#[test]
fn criterion_1_solver_oracles() {
    let ns = ns_single_mode_decay();
    let ac = allen_cahn_heat_limit();
    let (helm_sol, helm_res) = helmholtz_eigenfunction_errors();
    let wave = wave_reversibility_error();
    let ok = ns < 1e-3 && ac < 1e-4 && helm_sol < 1e-10 && helm_res < 1e-10 && wave < 1e-6;
    report(
        "1 (solver oracles)",
        ok,
        &format!("ns={ns:.2e} ac={ac:.2e} helm=({helm_sol:.2e},{helm_res:.2e}) wave={wave:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 2

/// Analytic denoiser for a zero-mean Gaussian prior with std `s`.
struct GaussianDenoiser {
    s: f64,
}

impl Denoiser for GaussianDenoiser {
    fn denoise(
        &self,
        x_t: &Array4<f64>,
        _y: &Array4<f64>,
        _m: &Array3<f64>,
        sigma: f64,
    ) -> Result<Array4<f64>> {
        let s2 = self.s * self.s;
        Ok(x_t.mapv(|v| s2 / (s2 + sigma * sigma) * v))
    }
}

struct ConstantDenoiser {
    value: f64,
}

impl Denoiser for ConstantDenoiser {
    fn denoise(
        &self,
        x_t: &Array4<f64>,
        _y: &Array4<f64>,
        _m: &Array3<f64>,
        _sigma: f64,
    ) -> Result<Array4<f64>> {
        Ok(Array4::from_elem(x_t.dim(), self.value))
    }
}

#[test]
fn criterion_2_diffusion_machinery() {
    let cfg = DiffusionConfig::default();

    // exact schedule endpoints
    let steps = karras_sigma_steps(&cfg);
    let endpoints_ok = steps[0] == cfg.sigma_max
        && steps[cfg.num_steps - 1] == cfg.sigma_min
        && steps[cfg.num_steps] == 0.0;

    // 4096 scalar samples through the probability-flow ODE must match the
    // Gaussian prior the analytic denoiser encodes
    let s = 0.5;
    let den = GaussianDenoiser { s };
    let y = Array4::zeros((1, 1, 1, 1));
    let m = Array3::zeros((1, 1, 1));
    let samples: Vec<f64> = (0..4096)
        .map(|seed| heun_sample(&den, &y, &m, &cfg, seed).unwrap()[[0, 0, 0, 0]] / s)
        .collect();
    let p = ks_p_value(ks_statistic_normal(&samples), samples.len());

    // a constant denoiser is a fixed point of the sampler
    let cden = ConstantDenoiser { value: 0.37 };
    let fixed = heun_sample(&cden, &y, &m, &cfg, 99).unwrap()[[0, 0, 0, 0]];
    let fixed_err = (fixed - 0.37).abs();

    let ok = endpoints_ok && p > 0.01 && fixed_err < 1e-6;
    report(
        "2 (diffusion machinery)",
        ok,
        &format!("endpoints_ok={endpoints_ok} ks_p={p:.4} fixed_err={fixed_err:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_gradient_correctness() {
    let start = std::time::Instant::now();
    let model = HvditModel::new(HvditConfig::tiny(), DiffusionConfig::default(), 7).unwrap();
    let max_rel = model.grad_check(64, 123).unwrap();
    let elapsed = start.elapsed();
    let ok = max_rel < 1e-4 && elapsed.as_secs() < 300;
    report(
        "3 (gradient correctness)",
        ok,
        &format!("max_rel={max_rel:.2e} elapsed={elapsed:?}"),
    );
}

// ---------------------------------------------------------------- criterion 4

fn forward_delta(model: &HvditModel, x: &Array4<f64>, pixel: (usize, usize, usize)) -> Array4<f64> {
    let (t, h, w, _) = x.dim();
    let y = Array4::zeros(x.dim());
    let m = Array3::zeros((t, h, w));
    let base = model.denoise(x, &y, &m, 0.7).unwrap();
    let mut xp = x.clone();
    xp[[pixel.0, pixel.1, pixel.2, 0]] += 0.25;
    let bumped = model.denoise(&xp, &y, &m, 0.7).unwrap();
    bumped - base
}

#[test]
fn criterion_4_locality() {
    // single-level neighborhood-only network: influence must vanish exactly
    // outside the composed attention windows
    let cfg = HvditConfig {
        dims: (4, 16, 16),
        channels: 1,
        patch: (2, 4, 4),
        widths: vec![16],
        neighborhood_depth: 1,
        global_depth: 0,
        head_dim: 8,
        kernel: (1, 3, 3),
        downsample: 2,
        mapping_depth: 1,
        mapping_width: 32,
        mlp_ratio: 2,
        mask_channel: true,
    };
    let model = HvditModel::new(cfg, DiffusionConfig::default(), 21).unwrap();
    let pixel = (0usize, 0usize, 0usize);
    let influence = model.influence_set(pixel);
    let local_model = influence.iter().any(|&b| !b);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array4::from_shape_fn((4, 16, 16, 1), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let delta = forward_delta(&model, &x, pixel);
    let mut exact_zero_outside = true;
    let mut nonzero_inside = false;
    for ((t, h, w, _), &d) in delta.indexed_iter() {
        if influence[[t, h, w]] {
            nonzero_inside |= d != 0.0;
        } else if d != 0.0 {
            exact_zero_outside = false;
        }
    }

    // a kernel covering the whole token grid must be bit-equal to explicit
    // global attention lists
    let cover_cfg = HvditConfig {
        kernel: (3, 7, 7), // token grid is (2, 4, 4); k >= 2*grid - 1 everywhere
        ..HvditConfig {
            dims: (4, 16, 16),
            channels: 1,
            patch: (2, 4, 4),
            widths: vec![16],
            neighborhood_depth: 1,
            global_depth: 0,
            head_dim: 8,
            kernel: (0, 0, 0),
            downsample: 2,
            mapping_depth: 1,
            mapping_width: 32,
            mlp_ratio: 2,
            mask_channel: true,
        }
    };
    let covering = HvditModel::new(cover_cfg, DiffusionConfig::default(), 21).unwrap();
    let mut global = covering.clone();
    let mut plan = (*global.plan).clone();
    for level in &mut plan.levels {
        let all: Vec<usize> = (0..level.tokens).collect();
        level.neighbors = std::sync::Arc::new(vec![all; level.tokens]);
    }
    global.plan = std::sync::Arc::new(plan);
    let y = Array4::zeros(x.dim());
    let m = Array3::zeros((4, 16, 16));
    let a = covering.denoise(&x, &y, &m, 0.7).unwrap();
    let b = global.denoise(&x, &y, &m, 0.7).unwrap();
    let bit_equal = a == b;

    let ok = local_model && exact_zero_outside && nonzero_inside && bit_equal;
    report(
        "4 (locality)",
        ok,
        &format!(
            "local_model={local_model} zero_outside={exact_zero_outside} \
             nonzero_inside={nonzero_inside} global_bit_equal={bit_equal}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

/// Overfit benchmark configuration shared by the main run and the ablation.
fn overfit_model_cfg(mask_channel: bool) -> HvditConfig {
    HvditConfig {
        dims: (8, 32, 32),
        channels: 1,
        patch: (2, 4, 4),
        widths: vec![64, 128],
        neighborhood_depth: 2,
        global_depth: 2,
        head_dim: 16,
        kernel: (2, 7, 7),
        downsample: 2,
        mapping_depth: 1,
        mapping_width: 128,
        mlp_ratio: 4,
        mask_channel,
    }
}

fn overfit_run(
    dataset: &TrajectoryDataset,
    out: &Path,
    mask_channel: bool,
    steps: u64,
    target: Option<f64>,
) -> (HvditModel, u64) {
    let cfg = TrainConfig {
        lr: 1e-3,
        lr_min: Some(2e-5),
        batch: 16,
        steps,
        seed: 1,
        task: TaskMixture::Single(TaskSpec::continuous_sensors(0.03).unwrap()),
        checkpoint_interval: 0,
        eval_interval: 250,
        target_rel_l2: target,
        ..TrainConfig::default()
    };
    // sigma_data matches the trajectories' pointwise std (near 1, not the
    // image-default 0.5); the noise range is narrowed and the training
    // sigma distribution broadened so the high-sigma regime -- where the
    // sampler must identify the trajectory from the sparse sensors alone --
    // is actually trained.
    let diffusion = DiffusionConfig {
        sigma_data: 1.0,
        sigma_max: 10.0,
        p_mean: -0.8,
        p_std: 1.6,
        ..DiffusionConfig::default()
    };
    let mut model =
        HvditModel::new(overfit_model_cfg(mask_channel), diffusion, cfg.seed).unwrap();
    let outcome = fit(&mut model, dataset, &cfg, out, None).unwrap();
    (model, outcome.steps_run)
}

/// Mean observed-pixel and all-frames error of sampled reconstructions.
/// Eight candidate samples per trajectory; the one most consistent with
/// the observations is kept (the ODE start can land in the wrong basin for
/// an unlucky noise draw, and that shows up at the observed pixels).
fn overfit_errors(model: &HvditModel, videos: &[Array4<f64>]) -> (f64, f64) {
    let task = TaskSpec::continuous_sensors(0.03).unwrap();
    let mut all = 0.0;
    let mut observed = 0.0;
    for (i, x0) in videos.iter().enumerate() {
        let (t, h, w, c) = x0.dim();
        let mut mrng = MaskRng::new(1u64.wrapping_add(i as u64));
        let om = vpde::masks::mask_for_task(t, h, w, &task, &mut mrng).unwrap();
        let m = om.mask().mapv(|v| v as f64);
        let mut y = Array4::zeros((t, h, w, c));
        for ((ti, hi, wi, ci), v) in y.indexed_iter_mut() {
            *v = x0[[ti, hi, wi, ci]] * m[[ti, hi, wi]];
        }
        let seeds = candidate_seeds(1 + i as u64, 8);
        let pred = consistent_heun_sample(model, &y, &m, &model.diffusion, &seeds).unwrap();
        all += relative_l2(&pred, x0, None).unwrap();
        observed += relative_l2_masked(&pred, x0, om.mask()).unwrap();
    }
    (
        all / videos.len() as f64,
        observed / videos.len() as f64,
    )
}

#[test]
fn criterion_5_overfit_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let gen = FamilyGenerator::desk_default(Family::NavierStokes, 32, 8);
    let dataset = generate_dataset(&gen, 8, 7, &dir.path().join("data")).unwrap();
    let videos: Vec<Array4<f64>> = (0..dataset.len())
        .map(|i| dataset.load(i).unwrap().to_f64())
        .collect();

    let (model, steps_used) =
        overfit_run(&dataset, &dir.path().join("main"), true, 12_000, Some(0.015));
    let (err_all, err_observed) = overfit_errors(&model, &videos);

    // ablation: drop the mask channel, same budget
    let (ablated, _) =
        overfit_run(&dataset, &dir.path().join("ablation"), false, steps_used, None);
    let (err_all_ablated, _) = overfit_errors(&ablated, &videos);

    let ok = err_all < 0.05 && err_observed < 0.02 && err_all_ablated > err_all;
    report(
        "5 (overfit benchmark)",
        ok,
        &format!(
            "steps={steps_used} err_all={err_all:.4} err_observed={err_observed:.4} \
             err_all_ablated={err_all_ablated:.4}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_mask_arithmetic() {
    let mut rng = MaskRng::new(0);
    let m128 = continuous_sensor_mask(8, 128, 128, 0.03, &mut rng).unwrap();
    let mut rng = MaskRng::new(1);
    let m64 = continuous_sensor_mask(8, 64, 64, 0.03, &mut rng).unwrap();
    let pop_ok = m128.popcount() == 491 * 8 && m64.popcount() == 122 * 8;

    let mut rng = MaskRng::new(2);
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for _ in 0..6000 {
        let om = sample_unified_task(8, 16, 16, &mut rng).unwrap();
        let key = format!("{}@{}", om.task.kind.as_str(), om.task.rate);
        *counts.entry(key).or_insert(0) += 1;
    }
    let counts: Vec<usize> = counts.values().copied().collect();
    let chi = chi_square_uniform(&counts);
    let chi_ok = counts.len() == 6 && chi < CHI_SQ_5DF_99;

    report(
        "6 (mask arithmetic)",
        pop_ok && chi_ok,
        &format!("popcounts=({},{}) categories={} chi={chi:.3}", m128.popcount(), m64.popcount(), counts.len()),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_determinism_and_formats() {
    let dir = tempfile::tempdir().unwrap();

    // container round trip
    let video = FieldVideo::new(
        Array4::from_shape_fn((3, 8, 8, 1), |(t, h, w, _)| (t + 2 * h + 3 * w) as f32 * 0.01),
        0.05,
        0.125,
        Family::WaveLayer,
        9,
    )
    .unwrap();
    let p1 = dir.path().join("a.vpde");
    let p2 = dir.path().join("b.vpde");
    write_container(&p1, &video).unwrap();
    write_container(&p2, &read_container(&p1).unwrap()).unwrap();
    let container_ok = std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();

    // checkpoint round trip
    let model = HvditModel::new(HvditConfig::tiny(), DiffusionConfig::default(), 4).unwrap();
    let c1 = dir.path().join("a.ckpt");
    let c2 = dir.path().join("b.ckpt");
    save_checkpoint(&c1, &model, None, None).unwrap();
    let reloaded = load_checkpoint(&c1).unwrap().into_model().unwrap();
    save_checkpoint(&c2, &reloaded, None, None).unwrap();
    let checkpoint_ok = std::fs::read(&c1).unwrap() == std::fs::read(&c2).unwrap();

    // training resume is bit-exact: 4 straight steps == 2 steps + resume
    let data_dir = dir.path().join("data");
    let gen = FamilyGenerator::desk_default(Family::AllenCahn, 8, 4);
    let dataset = generate_dataset(&gen, 4, 3, &data_dir).unwrap();
    let train_cfg = |steps: u64| TrainConfig {
        batch: 2,
        steps,
        seed: 5,
        task: TaskMixture::Single(TaskSpec::continuous_sensors(0.25).unwrap()),
        checkpoint_interval: 2,
        eval_interval: 0,
        ..TrainConfig::default()
    };
    let mut full = HvditModel::new(HvditConfig::tiny(), DiffusionConfig::default(), 5).unwrap();
    fit(&mut full, &dataset, &train_cfg(4), &dir.path().join("full"), None).unwrap();
    let mut half = HvditModel::new(HvditConfig::tiny(), DiffusionConfig::default(), 5).unwrap();
    fit(&mut half, &dataset, &train_cfg(2), &dir.path().join("half"), None).unwrap();
    let mut resumed = HvditModel::new(HvditConfig::tiny(), DiffusionConfig::default(), 5).unwrap();
    fit(
        &mut resumed,
        &dataset,
        &train_cfg(4),
        &dir.path().join("resumed"),
        Some(&dir.path().join("half").join("ckpt_final.ckpt")),
    )
    .unwrap();
    let resume_ok = full.params == resumed.params;

    // rerunning a CLI command with identical flags is byte-identical
    let cli_a = dir.path().join("cli_a");
    let cli_b = dir.path().join("cli_b");
    for out in [&cli_a, &cli_b] {
        let status = Command::new(env!("CARGO_BIN_EXE_vpde"))
            .args([
                "--threads", "1", "gen-data", "--family", "ac", "--count", "2", "--size", "8",
                "--frames", "4", "--seed", "3", "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let cli_ok = ["manifest.json", "traj_00000.vpde", "traj_00001.vpde"]
        .iter()
        .all(|n| std::fs::read(cli_a.join(n)).unwrap() == std::fs::read(cli_b.join(n)).unwrap());

    let ok = container_ok && checkpoint_ok && resume_ok && cli_ok;
    report(
        "7 (determinism and formats)",
        ok,
        &format!(
            "container={container_ok} checkpoint={checkpoint_ok} resume={resume_ok} cli={cli_ok}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_rollout_plumbing() {
    let cfg = HvditConfig {
        dims: (8, 8, 8),
        channels: 1,
        patch: (2, 4, 4),
        widths: vec![16, 32],
        neighborhood_depth: 1,
        global_depth: 1,
        head_dim: 8,
        kernel: (2, 3, 3),
        downsample: 2,
        mapping_depth: 1,
        mapping_width: 32,
        mlp_ratio: 2,
        mask_channel: true,
    };
    let model = HvditModel::new(cfg, DiffusionConfig::default(), 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let initial = Array4::from_shape_fn((1, 8, 8, 1), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.3
    });

    let rolled =
        autoregressive_rollout(&model, &model.diffusion, 8, &initial, 4, 3).unwrap();
    let frames_ok = rolled.dim() == (29, 8, 8, 1);

    // a single window equals one forward-full conditioned sample
    let single = autoregressive_rollout(&model, &model.diffusion, 8, &initial, 1, 3).unwrap();
    let mut m = Array3::zeros((8, 8, 8));
    m.index_axis_mut(Axis(0), 0).fill(1.0);
    let mut y = Array4::zeros((8, 8, 8, 1));
    y.index_axis_mut(Axis(0), 0).assign(&initial.index_axis(Axis(0), 0));
    let direct = heun_sample(&model, &y, &m, &model.diffusion, 3).unwrap();
    // frame 0 of the rollout is the true conditioning frame; later frames
    // must match the single forward sample exactly
    let equal = (1..8).all(|f| {
        single.index_axis(Axis(0), f) == direct.index_axis(Axis(0), f)
    }) && single.index_axis(Axis(0), 0) == initial.index_axis(Axis(0), 0);

    report(
        "8 (rollout plumbing)",
        frames_ok && equal,
        &format!("frames={:?} single_window_equal={equal}", rolled.dim()),
    );
}
