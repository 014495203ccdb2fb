//! Pseudo-spectral solver for 2-D incompressible Navier-Stokes in
//! vorticity form, with 2/3-rule dealiasing, exact integrating-factor
//! treatment of the viscous term, and RK4 for advection and forcing.

use ndarray::{Array2, Array4};
use num_complex::Complex64;

use crate::error::{Result, VpdeError};
use crate::fftutil::{fft2_inplace, fft2_real, freq, ifft2_to_real};
use crate::fields::{Family, FieldVideo};

/// Forcing term of the vorticity equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    /// q(c) = 0.1 (sin(2 pi (c1+c2)) + cos(2 pi (c1+c2))) on the unit torus.
    StaticLowFreq,
    /// q(c, tau) = -4 cos(4 c2) - drag * w(c, tau) on the 2 pi torus.
    Kolmogorov { drag: f64 },
    /// No forcing; used by solver oracles.
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct NsConfig {
    pub nu: f64,
    pub forcing: Forcing,
    pub n: usize,
    pub dt_solver: f64,
    pub frames: usize,
    pub frame_stride: usize,
}

impl NsConfig {
    pub fn new(
        nu: f64,
        forcing: Forcing,
        n: usize,
        dt_solver: f64,
        frames: usize,
        frame_stride: usize,
    ) -> Result<Self> {
        if nu <= 0.0 {
            return Err(VpdeError::InvalidConfig("viscosity must be positive".into()));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(VpdeError::BadGridSize(n));
        }
        if frames < 1 || frame_stride < 1 {
            return Err(VpdeError::InvalidConfig("frames and frame_stride must be >= 1".into()));
        }
        let cfg = NsConfig { nu, forcing, n, dt_solver, frames, frame_stride };
        // advective stability bound assuming unit velocity scale; the actual
        // CFL number is monitored while stepping
        let dx = cfg.domain_length() / n as f64;
        if !(dt_solver > 0.0) || dt_solver > dx {
            return Err(VpdeError::CflViolation(format!(
                "dt_solver = {dt_solver} exceeds grid spacing {dx}"
            )));
        }
        Ok(cfg)
    }

    pub fn domain_length(&self) -> f64 {
        match self.forcing {
            Forcing::Kolmogorov { .. } => 2.0 * std::f64::consts::PI,
            _ => 1.0,
        }
    }

    /// Desk-scale defaults for the static-forcing NS family.
    pub fn desk_navier_stokes(n: usize, frames: usize) -> Self {
        NsConfig {
            nu: 1e-3,
            forcing: Forcing::StaticLowFreq,
            n,
            dt_solver: 5e-3,
            frames,
            frame_stride: 10,
        }
    }

    /// Desk-scale defaults for Kolmogorov flow.
    pub fn desk_kolmogorov(n: usize, frames: usize) -> Self {
        NsConfig {
            nu: 1e-3,
            forcing: Forcing::Kolmogorov { drag: 0.1 },
            n,
            dt_solver: 5e-3,
            frames,
            frame_stride: 10,
        }
    }
}

/// Static part of the forcing on the physical grid.
fn static_forcing_grid(cfg: &NsConfig) -> Array2<f64> {
    let n = cfg.n;
    let dx = cfg.domain_length() / n as f64;
    match cfg.forcing {
        Forcing::StaticLowFreq => Array2::from_shape_fn((n, n), |(r, c)| {
            let s = 2.0 * std::f64::consts::PI * (c as f64 * dx + r as f64 * dx);
            0.1 * (s.sin() + s.cos())
        }),
        Forcing::Kolmogorov { .. } => {
            Array2::from_shape_fn((n, n), |(r, _)| -4.0 * (4.0 * r as f64 * dx).cos())
        }
        Forcing::None => Array2::zeros((n, n)),
    }
}

struct Spectral {
    n: usize,
    /// physical wavenumbers along rows (c2 axis) and cols (c1 axis)
    ky: Vec<f64>,
    kx: Vec<f64>,
    /// 2/3-rule dealias mask
    keep: Array2<bool>,
}

impl Spectral {
    fn new(n: usize, domain: f64) -> Self {
        let scale = 2.0 * std::f64::consts::PI / domain;
        let ky: Vec<f64> = (0..n).map(|i| freq(i, n) as f64 * scale).collect();
        let kx = ky.clone();
        let cutoff = (n as i64) / 3;
        let keep = Array2::from_shape_fn((n, n), |(r, c)| {
            freq(r, n).abs() <= cutoff && freq(c, n).abs() <= cutoff
        });
        Spectral { n, ky, kx, keep }
    }

    fn dealias(&self, w_hat: &mut Array2<Complex64>) {
        for ((r, c), v) in w_hat.indexed_iter_mut() {
            if !self.keep[[r, c]] {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// -v . grad(w) + static forcing - drag * w, in spectral space.
    fn nonlinear(&self, w_hat: &Array2<Complex64>, q_hat: &Array2<Complex64>, drag: f64) -> Array2<Complex64> {
        let n = self.n;
        let i = Complex64::new(0.0, 1.0);
        let mut psi = Array2::<Complex64>::zeros((n, n));
        let mut vx = Array2::<Complex64>::zeros((n, n));
        let mut vy = Array2::<Complex64>::zeros((n, n));
        let mut wx = Array2::<Complex64>::zeros((n, n));
        let mut wy = Array2::<Complex64>::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                let ksq = self.ky[r] * self.ky[r] + self.kx[c] * self.kx[c];
                let w = w_hat[[r, c]];
                if ksq > 0.0 {
                    psi[[r, c]] = w / ksq;
                }
                // v = (dy psi, -dx psi)
                vx[[r, c]] = i * self.ky[r] * psi[[r, c]];
                vy[[r, c]] = -i * self.kx[c] * psi[[r, c]];
                wx[[r, c]] = i * self.kx[c] * w;
                wy[[r, c]] = i * self.ky[r] * w;
            }
        }
        for g in [&mut vx, &mut vy, &mut wx, &mut wy] {
            fft2_inplace(g, true);
        }
        let mut advect = Array2::<Complex64>::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                let adv = vx[[r, c]].re * wx[[r, c]].re + vy[[r, c]].re * wy[[r, c]].re;
                advect[[r, c]] = Complex64::new(-adv, 0.0);
            }
        }
        fft2_inplace(&mut advect, false);
        self.dealias(&mut advect);
        // advection of a periodic field has zero spatial mean
        advect[[0, 0]] = Complex64::new(0.0, 0.0);
        for r in 0..n {
            for c in 0..n {
                advect[[r, c]] += q_hat[[r, c]] - drag * w_hat[[r, c]];
            }
        }
        advect
    }

    fn max_speed(&self, w_hat: &Array2<Complex64>) -> f64 {
        let n = self.n;
        let i = Complex64::new(0.0, 1.0);
        let mut vx = Array2::<Complex64>::zeros((n, n));
        let mut vy = Array2::<Complex64>::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                let ksq = self.ky[r] * self.ky[r] + self.kx[c] * self.kx[c];
                if ksq > 0.0 {
                    let psi = w_hat[[r, c]] / ksq;
                    vx[[r, c]] = i * self.ky[r] * psi;
                    vy[[r, c]] = -i * self.kx[c] * psi;
                }
            }
        }
        fft2_inplace(&mut vx, true);
        fft2_inplace(&mut vy, true);
        vx.iter()
            .zip(vy.iter())
            .map(|(a, b)| (a.re * a.re + b.re * b.re).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Integrate the vorticity equation from `w0` (a one-frame field video),
/// returning `frames` frames sampled every `frame_stride` solver steps.
/// Frame 0 is `w0` itself.
pub fn simulate_ns(cfg: &NsConfig, w0: &FieldVideo) -> Result<FieldVideo> {
    let n = cfg.n;
    let (t0, h, w_, _c) = w0.dims();
    if t0 != 1 || h != n || w_ != n {
        return Err(VpdeError::ShapeMismatch {
            expected: vec![1, n, n, 1],
            got: vec![t0, h, w_, 1],
        });
    }
    let spec = Spectral::new(n, cfg.domain_length());
    let drag = match cfg.forcing {
        Forcing::Kolmogorov { drag } => drag,
        _ => 0.0,
    };
    let mut q_hat = fft2_real(&static_forcing_grid(cfg));
    spec.dealias(&mut q_hat);

    let grid0 = Array2::from_shape_fn((n, n), |(r, c)| w0.data()[[0, r, c, 0]] as f64);
    let mut w_hat = fft2_real(&grid0);
    spec.dealias(&mut w_hat);

    let dt = cfg.dt_solver;
    let dx = cfg.domain_length() / n as f64;
    // half- and full-step viscous decay factors
    let e_half = Array2::from_shape_fn((n, n), |(r, c)| {
        let ksq = spec.ky[r] * spec.ky[r] + spec.kx[c] * spec.kx[c];
        (-cfg.nu * ksq * dt / 2.0).exp()
    });

    let mut out = Array4::<f32>::zeros((cfg.frames, n, n, 1));
    for ((r, c), v) in grid0.indexed_iter() {
        out[[0, r, c, 0]] = *v as f32;
    }


    let mut step = 0usize;
    for frame in 1..cfg.frames {
        for _ in 0..cfg.frame_stride {
            let a = spec.nonlinear(&w_hat, &q_hat, drag);
            let wa = Array2::from_shape_fn((n, n), |(r, c)| {
                (w_hat[[r, c]] + dt / 2.0 * a[[r, c]]) * e_half[[r, c]]
            });
            let b = spec.nonlinear(&wa, &q_hat, drag);
            let wb = Array2::from_shape_fn((n, n), |(r, c)| {
                w_hat[[r, c]] * e_half[[r, c]] + dt / 2.0 * b[[r, c]]
            });
            let cc = spec.nonlinear(&wb, &q_hat, drag);
            let wc = Array2::from_shape_fn((n, n), |(r, c)| {
                w_hat[[r, c]] * e_half[[r, c]] * e_half[[r, c]]
                    + dt * cc[[r, c]] * e_half[[r, c]]
            });
            let d = spec.nonlinear(&wc, &q_hat, drag);
            let mut next = Array2::<Complex64>::zeros((n, n));
            for r in 0..n {
                for c in 0..n {
                    let e = e_half[[r, c]];
                    next[[r, c]] = w_hat[[r, c]] * e * e
                        + dt / 6.0
                            * (a[[r, c]] * e * e
                                + 2.0 * e * (b[[r, c]] + cc[[r, c]])
                                + d[[r, c]]);
                }
            }
            spec.dealias(&mut next);
            w_hat = next;
            step += 1;
        }
        let grid = ifft2_to_real(&w_hat);
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(VpdeError::NonFiniteState { step });
        }
        let cfl = spec.max_speed(&w_hat) * dt / dx;
        if cfl > 1.5 {
            return Err(VpdeError::CflViolation(format!(
                "advective CFL {cfl:.2} at step {step}"
            )));
        }
        for ((r, c), v) in grid.indexed_iter() {
            out[[frame, r, c, 0]] = *v as f32;
        }
    }

    FieldVideo::new(
        out,
        dt * cfg.frame_stride as f64,
        dx,
        match cfg.forcing {
            Forcing::Kolmogorov { .. } => Family::Kolmogorov,
            _ => Family::NavierStokes,
        },
        w0.seed,
    )
}
