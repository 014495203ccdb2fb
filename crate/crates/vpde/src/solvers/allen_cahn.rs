//! Semi-implicit Allen-Cahn solver on the periodic unit torus:
//! Crank-Nicolson spectral diffusion, explicit reaction.

use ndarray::{Array2, Array4};
use num_complex::Complex64;

use crate::error::{Result, VpdeError};
use crate::fftutil::{fft2_inplace, fft2_real, freq};
use crate::fields::{Family, FieldVideo};

#[derive(Debug, Clone, Copy)]
pub struct AcConfig {
    /// Reaction rate gamma.
    pub gamma: f64,
    pub n: usize,
    pub dt_solver: f64,
    pub frames: usize,
    pub frame_stride: usize,
}

impl AcConfig {
    pub fn new(gamma: f64, n: usize, dt_solver: f64, frames: usize, frame_stride: usize) -> Result<Self> {
        if gamma < 0.0 {
            return Err(VpdeError::InvalidConfig("gamma must be nonnegative".into()));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(VpdeError::BadGridSize(n));
        }
        if frames < 1 || frame_stride < 1 || !(dt_solver > 0.0) {
            return Err(VpdeError::InvalidConfig("bad frame/step counts".into()));
        }
        // explicit reaction sub-step stability
        if gamma * gamma * dt_solver >= 0.1 {
            return Err(VpdeError::InvalidConfig(format!(
                "gamma^2 dt = {} must stay below 0.1",
                gamma * gamma * dt_solver
            )));
        }
        Ok(AcConfig { gamma, n, dt_solver, frames, frame_stride })
    }

    pub fn desk_default(n: usize, frames: usize) -> Self {
        // gamma = 5 instead of the stiff reference value 220
        AcConfig { gamma: 5.0, n, dt_solver: 2e-4, frames, frame_stride: 50 }
    }
}

/// Integrate from a one-frame initial condition with entries in [-1, 1].
pub fn simulate_allen_cahn(cfg: &AcConfig, u0: &FieldVideo) -> Result<FieldVideo> {
    let n = cfg.n;
    let (t0, h, w, _) = u0.dims();
    if t0 != 1 || h != n || w != n {
        return Err(VpdeError::ShapeMismatch {
            expected: vec![1, n, n, 1],
            got: vec![t0, h, w, 1],
        });
    }
    let dt = cfg.dt_solver;
    let gamma_sq = cfg.gamma * cfg.gamma;
    let ksq = Array2::from_shape_fn((n, n), |(r, c)| {
        let scale = 2.0 * std::f64::consts::PI;
        let ky = freq(r, n) as f64 * scale;
        let kx = freq(c, n) as f64 * scale;
        ky * ky + kx * kx
    });

    let grid0 = Array2::from_shape_fn((n, n), |(r, c)| u0.data()[[0, r, c, 0]] as f64);
    let mut u = grid0.clone();

    let mut out = Array4::<f32>::zeros((cfg.frames, n, n, 1));
    for ((r, c), v) in grid0.indexed_iter() {
        out[[0, r, c, 0]] = *v as f32;
    }

    let mut step = 0usize;
    for frame in 1..cfg.frames {
        for _ in 0..cfg.frame_stride {
            // reaction gamma^2 u (1 - u^2), explicit
            let reaction = u.mapv(|v| gamma_sq * v * (1.0 - v * v));
            let mut u_hat = fft2_real(&u);
            let r_hat = fft2_real(&reaction);
            for ((r, c), v) in u_hat.indexed_iter_mut() {
                let k2 = ksq[[r, c]];
                *v = (*v * Complex64::new(1.0 - dt * k2 / 2.0, 0.0) + dt * r_hat[[r, c]])
                    / Complex64::new(1.0 + dt * k2 / 2.0, 0.0);
            }
            let mut back = u_hat;
            fft2_inplace(&mut back, true);
            u = back.mapv(|v| v.re);
            step += 1;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(VpdeError::NonFiniteState { step });
        }
        for ((r, c), v) in u.indexed_iter() {
            out[[frame, r, c, 0]] = *v as f32;
        }
    }
    FieldVideo::new(
        out,
        dt * cfg.frame_stride as f64,
        1.0 / n as f64,
        Family::AllenCahn,
        u0.seed,
    )
}
