//! Finite-difference wave equation with spatially varying propagation speed
//! and an exponential sponge layer absorbing outgoing waves at the boundary.

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VpdeError};
use crate::fields::{Family, FieldVideo};

#[derive(Debug, Clone)]
pub struct WaveLayerConfig {
    pub layers_min: usize,
    pub layers_max: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub bumps_min: usize,
    pub bumps_max: usize,
    /// Bump standard deviation range as a fraction of the domain width.
    pub bump_sigma_min: f64,
    pub bump_sigma_max: f64,
    /// Sponge width in cells and dimensionless damping strength.
    pub sponge_width: usize,
    pub sponge_strength: f64,
    pub n: usize,
    pub dt_solver: f64,
    pub frames: usize,
    pub frame_stride: usize,
}

impl WaveLayerConfig {
    pub fn desk_default(n: usize, frames: usize) -> Self {
        WaveLayerConfig {
            layers_min: 3,
            layers_max: 6,
            speed_min: 0.3,
            speed_max: 1.0,
            bumps_min: 2,
            bumps_max: 6,
            bump_sigma_min: 0.05,
            bump_sigma_max: 0.15,
            sponge_width: 8,
            sponge_strength: 40.0,
            n,
            dt_solver: 0.25 / n as f64,
            frames,
            frame_stride: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers_min < 1 || self.layers_min > self.layers_max {
            return Err(VpdeError::InvalidConfig("bad layer count range".into()));
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max) {
            return Err(VpdeError::InvalidConfig("speeds must be positive".into()));
        }
        if self.frames < 1 || self.frame_stride < 1 || self.n < 4 {
            return Err(VpdeError::InvalidConfig("bad grid/frame counts".into()));
        }
        let dx = 1.0 / self.n as f64;
        let cfl = self.speed_max * self.dt_solver / dx;
        if !(cfl < std::f64::consts::FRAC_1_SQRT_2) {
            return Err(VpdeError::CflViolation(format!(
                "c_max dt/dx = {cfl:.3} must be below 1/sqrt(2)"
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant speed field with horizontal layers separated by
/// random smooth frontier curves (4-harmonic Fourier polylines, kept
/// monotone so layers never invert).
pub fn sample_layered_speed(cfg: &WaveLayerConfig, seed: u64) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57415645);
    let n = cfg.n;
    let layers = rng.gen_range(cfg.layers_min..=cfg.layers_max);
    let speeds: Vec<f64> = (0..layers)
        .map(|_| rng.gen_range(cfg.speed_min..=cfg.speed_max))
        .collect();
    if layers == 1 {
        return Ok(Array2::from_elem((n, n), speeds[0]));
    }

    // frontier i sits near row (i+1) * n / layers, wiggled by 4 harmonics
    let mut frontiers: Vec<Vec<f64>> = Vec::with_capacity(layers - 1);
    let max_wiggle = n as f64 / (4.0 * layers as f64);
    for i in 0..layers - 1 {
        let base = (i + 1) as f64 * n as f64 / layers as f64;
        let coeffs: Vec<(f64, f64)> = (1..=4)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        let row: Vec<f64> = (0..n)
            .map(|c| {
                let x = c as f64 / n as f64;
                let mut y = base;
                for (m, &(amp, phase)) in coeffs.iter().enumerate() {
                    y += amp * max_wiggle / (m + 1) as f64
                        * (std::f64::consts::TAU * (m + 1) as f64 * x + phase).sin();
                }
                y
            })
            .collect();
        frontiers.push(row);
    }
    // enforce monotone ordering column by column
    for c in 0..n {
        for i in 1..frontiers.len() {
            if frontiers[i][c] <= frontiers[i - 1][c] + 1.0 {
                frontiers[i][c] = frontiers[i - 1][c] + 1.0;
            }
        }
    }

    let field = Array2::from_shape_fn((n, n), |(r, c)| {
        let mut layer = 0;
        for f in &frontiers {
            if (r as f64) >= f[c] {
                layer += 1;
            }
        }
        speeds[layer]
    });
    Ok(field)
}

/// Sponge damping rate per cell: quadratic ramp inside the boundary strip.
fn sponge_profile(n: usize, width: usize, strength: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(r, c)| {
        let d = r.min(c).min(n - 1 - r).min(n - 1 - c);
        if d < width {
            let x = (width - d) as f64 / width as f64;
            strength * x * x
        } else {
            0.0
        }
    })
}

/// Displacement/velocity pair advanced by symplectic Euler; the scheme is
/// exactly invertible when the sponge is disabled.
pub struct WaveState {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

fn laplacian_dirichlet(u: &Array2<f64>, dx: f64) -> Array2<f64> {
    let (n, _) = u.dim();
    let inv = 1.0 / (dx * dx);
    Array2::from_shape_fn((n, n), |(r, c)| {
        let up = if r > 0 { u[[r - 1, c]] } else { 0.0 };
        let down = if r + 1 < n { u[[r + 1, c]] } else { 0.0 };
        let left = if c > 0 { u[[r, c - 1]] } else { 0.0 };
        let right = if c + 1 < n { u[[r, c + 1]] } else { 0.0 };
        (up + down + left + right - 4.0 * u[[r, c]]) * inv
    })
}

impl WaveState {
    pub fn step_forward(&mut self, speed_sq: &Array2<f64>, sponge: &Array2<f64>, dt: f64, dx: f64) {
        let lap = laplacian_dirichlet(&self.u, dx);
        for ((r, c), v) in self.v.indexed_iter_mut() {
            *v += dt * speed_sq[[r, c]] * lap[[r, c]];
        }
        for ((r, c), u) in self.u.indexed_iter_mut() {
            *u += dt * self.v[[r, c]];
        }
        if sponge.iter().any(|&s| s > 0.0) {
            for ((r, c), u) in self.u.indexed_iter_mut() {
                *u *= (-sponge[[r, c]] * dt).exp();
            }
            for ((r, c), v) in self.v.indexed_iter_mut() {
                *v *= (-sponge[[r, c]] * dt).exp();
            }
        }
    }

    /// Exact inverse of [`step_forward`] with the sponge disabled.
    pub fn step_backward(&mut self, speed_sq: &Array2<f64>, dt: f64, dx: f64) {
        for ((r, c), u) in self.u.indexed_iter_mut() {
            *u -= dt * self.v[[r, c]];
        }
        let lap = laplacian_dirichlet(&self.u, dx);
        for ((r, c), v) in self.v.indexed_iter_mut() {
            *v -= dt * speed_sq[[r, c]] * lap[[r, c]];
        }
    }
}

/// Sum of random Gaussian bumps used as the initial displacement.
pub fn sample_bumps(cfg: &WaveLayerConfig, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x42554d50);
    let n = cfg.n;
    let count = rng.gen_range(cfg.bumps_min..=cfg.bumps_max);
    let mut u = Array2::<f64>::zeros((n, n));
    for _ in 0..count {
        // keep bump centers away from the sponge
        let margin = cfg.sponge_width as f64 / n as f64 + 0.05;
        let cx = rng.gen_range(margin..1.0 - margin);
        let cy = rng.gen_range(margin..1.0 - margin);
        let sigma = rng.gen_range(cfg.bump_sigma_min..=cfg.bump_sigma_max);
        let amp = rng.gen_range(0.5..1.0);
        for ((r, c), v) in u.indexed_iter_mut() {
            let dy = r as f64 / n as f64 - cy;
            let dx = c as f64 / n as f64 - cx;
            *v += amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    u
}

/// Simulate from an explicit initial displacement and speed field.
pub fn simulate_wave_from(
    cfg: &WaveLayerConfig,
    u0: &Array2<f64>,
    speed: &Array2<f64>,
    seed: u64,
) -> Result<FieldVideo> {
    cfg.validate()?;
    let n = cfg.n;
    let dx = 1.0 / n as f64;
    let dt = cfg.dt_solver;
    let speed_sq = speed.mapv(|c| c * c);
    let max_speed = speed.iter().cloned().fold(0.0, f64::max);
    if !(max_speed * dt / dx < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(VpdeError::CflViolation(format!(
            "speed field violates CFL: c dt/dx = {:.3}",
            max_speed * dt / dx
        )));
    }
    let sponge = sponge_profile(n, cfg.sponge_width, cfg.sponge_strength);
    let mut state = WaveState { u: u0.clone(), v: Array2::zeros((n, n)) };

    let mut out = Array4::<f32>::zeros((cfg.frames, n, n, 1));
    for ((r, c), v) in state.u.indexed_iter() {
        out[[0, r, c, 0]] = *v as f32;
    }
    let mut step = 0usize;
    for frame in 1..cfg.frames {
        for _ in 0..cfg.frame_stride {
            state.step_forward(&speed_sq, &sponge, dt, dx);
            step += 1;
        }
        if state.u.iter().any(|v| !v.is_finite()) {
            return Err(VpdeError::NonFiniteState { step });
        }
        for ((r, c), v) in state.u.indexed_iter() {
            out[[frame, r, c, 0]] = *v as f32;
        }
    }
    FieldVideo::new(out, dt * cfg.frame_stride as f64, dx, Family::WaveLayer, seed)
}

/// Sample a random layered medium and bump set, then simulate.
/// Returns the trajectory together with the speed field.
pub fn simulate_wave_layer(cfg: &WaveLayerConfig, seed: u64) -> Result<(FieldVideo, Array2<f64>)> {
    let speed = sample_layered_speed(cfg, seed)?;
    let u0 = sample_bumps(cfg, seed);
    let video = simulate_wave_from(cfg, &u0, &speed, seed)?;
    Ok((video, speed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, frames: usize) -> WaveLayerConfig {
        WaveLayerConfig::desk_default(n, frames)
    }

    #[test]
    fn single_layer_is_constant() {
        let mut c = cfg(32, 4);
        c.layers_min = 1;
        c.layers_max = 1;
        let field = sample_layered_speed(&c, 7).unwrap();
        let first = field[[0, 0]];
        assert!(field.iter().all(|&v| v == first));
    }

    #[test]
    fn distinct_value_count_matches_layer_count() {
        for seed in 0..5u64 {
            let mut c = cfg(64, 4);
            c.layers_min = 4;
            c.layers_max = 4;
            let field = sample_layered_speed(&c, seed).unwrap();
            let mut values: Vec<u64> = field.iter().map(|v| v.to_bits()).collect();
            values.sort_unstable();
            values.dedup();
            assert_eq!(values.len(), 4, "seed {seed}");
        }
    }

    #[test]
    fn speed_sampling_is_deterministic() {
        let c = cfg(32, 4);
        assert_eq!(sample_layered_speed(&c, 5).unwrap(), sample_layered_speed(&c, 5).unwrap());
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let c = cfg(32, 5);
        let speed = Array2::from_elem((32, 32), 0.5);
        let u0 = Array2::zeros((32, 32));
        let traj = simulate_wave_from(&c, &u0, &speed, 0).unwrap();
        assert!(traj.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ring_front_expands_at_wave_speed() {
        // constant speed, centered bump: the outgoing front radius grows at c0 t
        let n = 128;
        let mut c = cfg(n, 2);
        c.sponge_strength = 0.0;
        c.dt_solver = 0.2 / n as f64;
        let c0 = 1.0;
        let sigma = 1.5 / n as f64;
        let u0 = Array2::from_shape_fn((n, n), |(r, col)| {
            let dy = r as f64 / n as f64 - 0.5;
            let dx = col as f64 / n as f64 - 0.5;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        });
        let speed = Array2::from_elem((n, n), c0);
        let dx = 1.0 / n as f64;
        let steps = 32usize; // t = steps * dt, front radius c0 t = 6.4 cells
        let mut state = WaveState { u: u0, v: Array2::zeros((n, n)) };
        let sponge = Array2::zeros((n, n));
        let speed_sq = speed.mapv(|v: f64| v * v);
        for _ in 0..steps {
            state.step_forward(&speed_sq, &sponge, c.dt_solver, dx);
        }
        let t = steps as f64 * c.dt_solver;
        // radial profile of |u|, peak location
        let mut best = (0.0f64, 0.0f64);
        for r in 0..n {
            for col in 0..n {
                let dy = (r as f64 - n as f64 / 2.0) * dx;
                let dxx = (col as f64 - n as f64 / 2.0) * dx;
                let rad = (dy * dy + dxx * dxx).sqrt();
                let v = state.u[[r, col]].abs();
                if v > best.0 {
                    best = (v, rad);
                }
            }
        }
        let expected = c0 * t;
        assert!(
            (best.1 - expected).abs() <= dx,
            "front at {} vs expected {} (one cell = {})",
            best.1,
            expected,
            dx
        );
    }

    #[test]
    fn forward_backward_recovers_initial_state() {
        let n = 64;
        let c = cfg(n, 2);
        let dx = 1.0 / n as f64;
        let u0 = sample_bumps(&c, 3);
        let speed_sq = Array2::from_elem((n, n), 0.25);
        let sponge = Array2::zeros((n, n));
        let mut state = WaveState { u: u0.clone(), v: Array2::zeros((n, n)) };
        for _ in 0..200 {
            state.step_forward(&speed_sq, &sponge, c.dt_solver, dx);
        }
        for _ in 0..200 {
            state.step_backward(&speed_sq, c.dt_solver, dx);
        }
        let num: f64 = state
            .u
            .iter()
            .zip(u0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = u0.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() < 1e-6, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn sponge_dissipates_field_energy() {
        let n = 64;
        let mut damped = cfg(n, 8);
        damped.frame_stride = 64;
        let mut free = damped.clone();
        free.sponge_strength = 0.0;
        let speed = Array2::from_elem((n, n), 0.8);
        // centered bump; waves reach the boundary well before the last frame
        let u0 = Array2::from_shape_fn((n, n), |(r, c)| {
            let dy = r as f64 / n as f64 - 0.5;
            let dx = c as f64 / n as f64 - 0.5;
            (-(dx * dx + dy * dy) / (2.0 * 0.05f64.powi(2))).exp()
        });
        let a = simulate_wave_from(&free, &u0, &speed, 0).unwrap();
        let b = simulate_wave_from(&damped, &u0, &speed, 0).unwrap();
        // compare energy integrated over the second half of the trajectory,
        // after outgoing waves have either reflected or been absorbed
        let late_energy = |v: &FieldVideo| -> f64 {
            (4..v.frames())
                .map(|t| {
                    v.data()
                        .index_axis(ndarray::Axis(0), t)
                        .iter()
                        .map(|&u| (u as f64).powi(2))
                        .sum::<f64>()
                })
                .sum()
        };
        assert!(late_energy(&b) < 0.5 * late_energy(&a));
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let mut c = cfg(32, 4);
        c.dt_solver = 1.0;
        assert!(matches!(c.validate(), Err(VpdeError::CflViolation(_))));
    }
}
