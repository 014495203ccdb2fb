//! Small spectral helpers: 2-D FFT over square grids and the type-I
//! discrete sine transform used by the Dirichlet Helmholtz solver.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D FFT (forward when `inverse` is false). Unnormalized
/// forward; inverse divides by N^2 so that `ifft2(fft2(x)) = x`.
pub fn fft2_inplace(grid: &mut Array2<Complex64>, inverse: bool) {
    let (rows, cols) = grid.dim();
    assert_eq!(rows, cols, "square grids only");
    let n = rows;
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };

    let mut scratch = vec![Complex64::default(); n];
    // rows
    for mut row in grid.rows_mut() {
        scratch.copy_from_slice(row.as_slice().expect("contiguous row"));
        fft.process(&mut scratch);
        row.as_slice_mut().unwrap().copy_from_slice(&scratch);
    }
    // columns
    for c in 0..n {
        for r in 0..n {
            scratch[r] = grid[[r, c]];
        }
        fft.process(&mut scratch);
        for r in 0..n {
            grid[[r, c]] = scratch[r];
        }
    }
    if inverse {
        let scale = 1.0 / (n * n) as f64;
        grid.mapv_inplace(|v| v * scale);
    }
}

/// Forward 2-D FFT of a real field.
pub fn fft2_real(field: &Array2<f64>) -> Array2<Complex64> {
    let mut grid = field.mapv(|v| Complex64::new(v, 0.0));
    fft2_inplace(&mut grid, false);
    grid
}

/// Real part of the inverse 2-D FFT.
pub fn ifft2_to_real(spec: &Array2<Complex64>) -> Array2<f64> {
    let mut grid = spec.clone();
    fft2_inplace(&mut grid, true);
    grid.mapv(|v| v.re)
}

/// Signed integer frequency for index `i` on an N-point periodic grid:
/// 0, 1, ..., N/2-1, -N/2, ..., -1.
pub fn freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 - 1 || n == 1 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Precomputed type-I discrete sine transform on N interior points.
///
/// `S_k = sum_j v_j sin(pi (j+1)(k+1) / (N+1))`; applying it twice
/// multiplies by (N+1)/2, which [`Dst1::inverse`] undoes.
pub struct Dst1 {
    n: usize,
    table: Array2<f64>,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let table = Array2::from_shape_fn((n, n), |(k, j)| {
            (std::f64::consts::PI * ((j + 1) * (k + 1)) as f64 / (n + 1) as f64).sin()
        });
        Dst1 { n, table }
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|j| self.table[[k, j]] * v[j]).sum())
            .collect()
    }

    pub fn inverse(&self, v: &[f64]) -> Vec<f64> {
        let scale = 2.0 / (self.n + 1) as f64;
        self.forward(v).into_iter().map(|x| x * scale).collect()
    }

    /// 2-D forward transform applied along both axes.
    pub fn forward_2d(&self, field: &Array2<f64>) -> Array2<f64> {
        let n = self.n;
        let mut out = Array2::zeros((n, n));
        for r in 0..n {
            let row: Vec<f64> = (0..n).map(|c| field[[r, c]]).collect();
            let t = self.forward(&row);
            for c in 0..n {
                out[[r, c]] = t[c];
            }
        }
        for c in 0..n {
            let col: Vec<f64> = (0..n).map(|r| out[[r, c]]).collect();
            let t = self.forward(&col);
            for r in 0..n {
                out[[r, c]] = t[r];
            }
        }
        out
    }

    /// 2-D inverse transform.
    pub fn inverse_2d(&self, field: &Array2<f64>) -> Array2<f64> {
        let scale = (2.0 / (self.n + 1) as f64).powi(2);
        self.forward_2d(field).mapv(|v| v * scale)
    }
}
