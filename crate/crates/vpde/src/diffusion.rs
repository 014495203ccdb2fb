//! EDM-style diffusion machinery: noise schedule, preconditioning
//! constants, denoising loss, score extraction, and the deterministic
//! probability-flow ODE sampler with Heun's method.

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VpdeError};

/// Noise-schedule, preconditioning, and sampler constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Schedule warp exponent rho.
    pub rho: f64,
    pub sigma_data: f64,
    /// Log-normal training noise parameters.
    pub p_mean: f64,
    pub p_std: f64,
    pub num_steps: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            sigma_data: 0.5,
            p_mean: -1.2,
            p_std: 1.2,
            num_steps: 32,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.rho > 0.0) {
            return Err(VpdeError::InvalidConfig(
                "need 0 < sigma_min < sigma_max and rho > 0".into(),
            ));
        }
        if self.num_steps < 1 {
            return Err(VpdeError::InvalidConfig("num_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Input/skip/output/noise preconditioning coefficients at level sigma.
    pub fn precondition(&self, sigma: f64) -> Precondition {
        let sd = self.sigma_data;
        let denom = sigma * sigma + sd * sd;
        Precondition {
            c_in: 1.0 / denom.sqrt(),
            c_skip: sd * sd / denom,
            c_out: sigma * sd / denom.sqrt(),
            c_noise: sigma.ln() / 4.0,
        }
    }

    /// EDM loss weight lambda(sigma).
    pub fn loss_weight(&self, sigma: f64) -> f64 {
        let sd = self.sigma_data;
        (sigma * sigma + sd * sd) / (sigma * sd).powi(2)
    }

    /// Draw a training noise level from the log-normal.
    pub fn sample_sigma(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.p_mean + self.p_std * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precondition {
    pub c_in: f64,
    pub c_skip: f64,
    pub c_out: f64,
    pub c_noise: f64,
}

/// Denoising network interface: predicts the clean field from a noisy
/// state at level sigma, conditioned on observed values and their mask.
pub trait Denoiser: Sync {
    fn denoise(
        &self,
        x_t: &Array4<f64>,
        y: &Array4<f64>,
        m: &Array3<f64>,
        sigma: f64,
    ) -> Result<Array4<f64>>;
}

/// Karras sigma schedule: N strictly decreasing positive levels followed
/// by a terminal zero.
pub fn karras_sigma_steps(cfg: &DiffusionConfig) -> Vec<f64> {
    let n = cfg.num_steps;
    let inv_rho = 1.0 / cfg.rho;
    let mut steps = Vec::with_capacity(n + 1);
    if n == 1 {
        steps.push(cfg.sigma_max);
    } else {
        for i in 0..n {
            let frac = i as f64 / (n - 1) as f64;
            let s = cfg.sigma_max.powf(inv_rho)
                + frac * (cfg.sigma_min.powf(inv_rho) - cfg.sigma_max.powf(inv_rho));
            steps.push(s.powf(cfg.rho));
        }
        // pin the endpoints so they survive powf round-tripping exactly
        steps[0] = cfg.sigma_max;
        steps[n - 1] = cfg.sigma_min;
    }
    steps.push(0.0);
    steps
}

/// Score field from a denoiser output: (D - x_t) / sigma^2.
pub fn score_from_denoiser(d_out: &Array4<f64>, x_t: &Array4<f64>, sigma: f64) -> Result<Array4<f64>> {
    if sigma <= 0.0 {
        return Err(VpdeError::ZeroSigma);
    }
    if d_out.dim() != x_t.dim() {
        let (t, h, w, c) = x_t.dim();
        let (dt, dh, dw, dc) = d_out.dim();
        return Err(VpdeError::ShapeMismatch {
            expected: vec![t, h, w, c],
            got: vec![dt, dh, dw, dc],
        });
    }
    let inv = 1.0 / (sigma * sigma);
    Ok((d_out - x_t).mapv(|v| v * inv))
}

/// EDM-weighted denoising loss lambda(sigma) * mean((D(x0 + sigma eps) - x0)^2).
pub fn edm_loss(
    denoiser: &dyn Denoiser,
    x0: &Array4<f64>,
    y: &Array4<f64>,
    m: &Array3<f64>,
    cfg: &DiffusionConfig,
    sigma: f64,
    eps: &Array4<f64>,
) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(VpdeError::ZeroSigma);
    }
    let x_t = x0 + &eps.mapv(|v| v * sigma);
    let d = denoiser.denoise(&x_t, y, m, sigma)?;
    let n = x0.len() as f64;
    let mse = d
        .iter()
        .zip(x0.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let loss = cfg.loss_weight(sigma) * mse;
    if !loss.is_finite() {
        return Err(VpdeError::NonFiniteLoss { sigma, sample: 0 });
    }
    Ok(loss)
}

/// Deterministic probability-flow ODE sampler: initialize at N(0, sigma_0^2),
/// integrate with Heun's second-order method over the Karras schedule, with
/// a plain Euler step onto sigma = 0.
pub fn heun_sample(
    denoiser: &dyn Denoiser,
    y: &Array4<f64>,
    m: &Array3<f64>,
    cfg: &DiffusionConfig,
    seed: u64,
) -> Result<Array4<f64>> {
    cfg.validate()?;
    let steps = karras_sigma_steps(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = y.dim();
    let mut x = Array4::from_shape_fn(shape, |_| {
        rng.sample::<f64, _>(StandardNormal) * steps[0]
    });

    for i in 0..steps.len() - 1 {
        let (sigma, sigma_next) = (steps[i], steps[i + 1]);
        let d = denoiser.denoise(&x, y, m, sigma)?;
        // dx/dsigma = (x - D) / sigma
        let slope = (&x - &d).mapv(|v| v / sigma);
        let h = sigma_next - sigma;
        let x_euler = &x + &slope.mapv(|v| v * h);
        x = if sigma_next > 0.0 {
            let d2 = denoiser.denoise(&x_euler, y, m, sigma_next)?;
            let slope2 = (&x_euler - &d2).mapv(|v| v / sigma_next);
            &x + &(&slope + &slope2).mapv(|v| v * (h / 2.0))
        } else {
            x_euler
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(VpdeError::NonFiniteState { step: i });
        }
    }
    Ok(x)
}

/// Sample once per seed and keep the prediction most consistent with the
/// observations: the ODE is deterministic given its initial noise, and an
/// unlucky draw can settle on a reconstruction that contradicts the known
/// values at observed pixels, which this discrepancy detects without any
/// access to the ground truth. Falls back to the first seed when the mask
/// carries no usable signal (empty, or all-zero observed values).
pub fn consistent_heun_sample(
    denoiser: &dyn Denoiser,
    y: &Array4<f64>,
    m: &Array3<f64>,
    cfg: &DiffusionConfig,
    seeds: &[u64],
) -> Result<Array4<f64>> {
    if seeds.is_empty() {
        return Err(VpdeError::InvalidConfig(
            "consistent_heun_sample needs at least one seed".into(),
        ));
    }
    let observed = m.mapv(|v| (v != 0.0) as u8);
    let mut best: Option<(f64, Array4<f64>)> = None;
    for &seed in seeds {
        let pred = heun_sample(denoiser, y, m, cfg, seed)?;
        let disc = crate::metrics::relative_l2_masked(&pred, y, &observed).unwrap_or(0.0);
        if best.as_ref().map_or(true, |(d, _)| disc < *d) {
            best = Some((disc, pred));
        }
    }
    Ok(best.expect("seeds is non-empty").1)
}
