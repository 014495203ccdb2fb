//! Inhomogeneous Helmholtz solver with zero-Dirichlet boundary on the unit
//! square, diagonalized by the type-I discrete sine transform. The static
//! problem packs into two frames: coefficient first, solution second.

use ndarray::{Array2, Array4};

use crate::error::{Result, VpdeError};
use crate::fftutil::Dst1;
use crate::fields::{Family, FieldVideo};
use crate::grf::GrfSpec;

#[derive(Debug, Clone, Copy)]
pub struct HelmholtzConfig {
    /// Wavenumber alpha.
    pub alpha: f64,
    /// Interior grid size N (grid spacing 1/(N+1)).
    pub n: usize,
    pub source: GrfSpec,
}

impl HelmholtzConfig {
    pub fn new(alpha: f64, n: usize, source: GrfSpec) -> Result<Self> {
        let cfg = HelmholtzConfig { alpha, n, source };
        let gap = cfg.min_eigen_gap();
        if gap < 1e-8 * cfg.alpha.powi(2).max(1.0) {
            return Err(VpdeError::ResonantAlpha { alpha_sq: alpha * alpha, gap });
        }
        Ok(cfg)
    }

    pub fn desk_default(n: usize, seed: u64) -> Self {
        HelmholtzConfig { alpha: 1.0, n, source: GrfSpec::new(n, seed) }
    }

    /// Eigenvalue of the negative discrete Dirichlet Laplacian at mode (j, k).
    pub fn eigenvalue(&self, j: usize, k: usize) -> f64 {
        let n = self.n;
        let h = 1.0 / (n + 1) as f64;
        let lam = |m: usize| {
            (2.0 - 2.0 * (std::f64::consts::PI * (m + 1) as f64 / (n + 1) as f64).cos()) / (h * h)
        };
        lam(j) + lam(k)
    }

    /// Smallest |alpha^2 - lambda| over all discrete modes.
    pub fn min_eigen_gap(&self) -> f64 {
        let a2 = self.alpha * self.alpha;
        let mut gap = f64::INFINITY;
        for j in 0..self.n {
            for k in 0..self.n {
                gap = gap.min((a2 - self.eigenvalue(j, k)).abs());
            }
        }
        gap
    }
}

/// Solve Laplacian(u) + alpha^2 u = a; returns a two-frame video with
/// frame 0 = a and frame 1 = u.
pub fn solve_helmholtz(cfg: &HelmholtzConfig, a: &FieldVideo) -> Result<FieldVideo> {
    let n = cfg.n;
    let (t0, h, w, _) = a.dims();
    if t0 != 1 || h != n || w != n {
        return Err(VpdeError::ShapeMismatch {
            expected: vec![1, n, n, 1],
            got: vec![t0, h, w, 1],
        });
    }
    let a2 = cfg.alpha * cfg.alpha;
    let gap = cfg.min_eigen_gap();
    if gap < 1e-8 * a2.max(1.0) {
        return Err(VpdeError::ResonantAlpha { alpha_sq: a2, gap });
    }

    let grid = Array2::from_shape_fn((n, n), |(r, c)| a.data()[[0, r, c, 0]] as f64);
    let dst = Dst1::new(n);
    let mut coeffs = dst.forward_2d(&grid);
    // -lambda u_hat + alpha^2 u_hat = a_hat
    for ((j, k), v) in coeffs.indexed_iter_mut() {
        *v /= a2 - cfg.eigenvalue(j, k);
    }
    let u = dst.inverse_2d(&coeffs);

    let mut out = Array4::<f32>::zeros((2, n, n, 1));
    for ((r, c), v) in grid.indexed_iter() {
        out[[0, r, c, 0]] = *v as f32;
    }
    for ((r, c), v) in u.indexed_iter() {
        out[[1, r, c, 0]] = *v as f32;
    }
    FieldVideo::new(out, 1.0, 1.0 / (n + 1) as f64, Family::Helmholtz, a.seed)
}

/// Solve directly on f64 grids; used by oracles that need full precision.
pub fn solve_helmholtz_grid(cfg: &HelmholtzConfig, a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = cfg.n;
    let a2 = cfg.alpha * cfg.alpha;
    let dst = Dst1::new(n);
    let mut coeffs = dst.forward_2d(a);
    for ((j, k), v) in coeffs.indexed_iter_mut() {
        *v /= a2 - cfg.eigenvalue(j, k);
    }
    Ok(dst.inverse_2d(&coeffs))
}

/// Discrete residual Laplacian(u) + alpha^2 u - a with the same Dirichlet
/// five-point Laplacian the solver diagonalizes.
pub fn helmholtz_residual(cfg: &HelmholtzConfig, u: &Array2<f64>, a: &Array2<f64>) -> f64 {
    let n = cfg.n;
    let h = 1.0 / (n + 1) as f64;
    let a2 = cfg.alpha * cfg.alpha;
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..n {
        for c in 0..n {
            let up = if r > 0 { u[[r - 1, c]] } else { 0.0 };
            let down = if r + 1 < n { u[[r + 1, c]] } else { 0.0 };
            let left = if c > 0 { u[[r, c - 1]] } else { 0.0 };
            let right = if c + 1 < n { u[[r, c + 1]] } else { 0.0 };
            let lap = (up + down + left + right - 4.0 * u[[r, c]]) / (h * h);
            let res = lap + a2 * u[[r, c]] - a[[r, c]];
            num += res * res;
            den += a[[r, c]] * a[[r, c]];
        }
    }
    (num / den.max(1e-300)).sqrt()
}
