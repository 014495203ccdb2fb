//! Precomputed index structures: neighbor lists for windowed attention,
//! merge/split gather orders, and the patchify/unpatchify permutations.
//! Built once per configuration and shared read-only across samples.

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};

use crate::error::Result;
use crate::tape::AttnPlan;

use super::HvditConfig;

/// Raster index of a token at (t, h, w) in a (gt, gh, gw) grid.
fn raster(t: usize, h: usize, w: usize, grid: (usize, usize, usize)) -> usize {
    (t * grid.1 + h) * grid.2 + w
}

/// Window along one axis: `floor((k-1)/2)` back, `ceil((k-1)/2)` forward,
/// clipped to the grid. Even kernels look one step further forward.
fn axis_window(center: usize, k: usize, len: usize) -> std::ops::RangeInclusive<usize> {
    let back = (k - 1) / 2;
    let fwd = k / 2;
    let lo = center.saturating_sub(back);
    let hi = (center + fwd).min(len - 1);
    lo..=hi
}

#[derive(Debug, Clone)]
pub struct LevelPlan {
    pub grid: (usize, usize, usize),
    pub tokens: usize,
    /// Neighbor lists for this level's attention, ascending raster order.
    /// At the bottleneck every list covers every token (global attention).
    pub neighbors: AttnPlan,
    /// Fine-token order grouping each coarse cell contiguously.
    pub merge_gather: Option<Arc<Vec<usize>>>,
    /// Inverse of `merge_gather`, used by the split path.
    pub merge_inverse: Option<Arc<Vec<usize>>>,
    /// Tokens merged per coarse cell (downsample^3, or ^2 once T is flat).
    pub group: usize,
}

#[derive(Debug, Clone)]
pub struct HvditPlan {
    pub levels: Vec<LevelPlan>,
    /// Maps each pixel row (T,H,W raster) to its row in the reshaped head
    /// output `[tokens * patch_volume, C]`.
    pub unpatch_perm: Arc<Vec<usize>>,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl HvditPlan {
    pub fn build(cfg: &HvditConfig) -> Result<HvditPlan> {
        cfg.validate()?;
        let grids = cfg.token_grids();
        let last = grids.len() - 1;
        let mut levels = Vec::with_capacity(grids.len());
        for (l, &grid) in grids.iter().enumerate() {
            let tokens = grid.0 * grid.1 * grid.2;
            let neighbors: AttnPlan = if l == last {
                Arc::new((0..tokens).map(|_| (0..tokens).collect()).collect())
            } else {
                Arc::new(neighbor_lists(grid, cfg.kernel))
            };
            let (merge_gather, merge_inverse, group) = if l < last {
                let (gather, group) = merge_order(grid, grids[l + 1], cfg.downsample);
                let mut inverse = vec![0usize; gather.len()];
                for (pos, &src) in gather.iter().enumerate() {
                    inverse[src] = pos;
                }
                (Some(Arc::new(gather)), Some(Arc::new(inverse)), group)
            } else {
                (None, None, 0)
            };
            levels.push(LevelPlan { grid, tokens, neighbors, merge_gather, merge_inverse, group });
        }
        Ok(HvditPlan {
            levels,
            unpatch_perm: Arc::new(unpatch_permutation(cfg)),
            in_ch: cfg.in_channels(),
            out_ch: cfg.out_channels(),
        })
    }
}

/// Boundary-clipped window neighbor lists in ascending raster order.
fn neighbor_lists(grid: (usize, usize, usize), kernel: (usize, usize, usize)) -> Vec<Vec<usize>> {
    let (gt, gh, gw) = grid;
    let (kt, kh, kw) = kernel;
    let mut lists = Vec::with_capacity(gt * gh * gw);
    for t in 0..gt {
        for h in 0..gh {
            for w in 0..gw {
                let mut neigh = Vec::new();
                for nt in axis_window(t, kt, gt) {
                    for nh in axis_window(h, kh, gh) {
                        for nw in axis_window(w, kw, gw) {
                            neigh.push(raster(nt, nh, nw, grid));
                        }
                    }
                }
                lists.push(neigh);
            }
        }
    }
    lists
}

/// Fine-token gather order for merging: coarse cells in raster order, and
/// the sub-block of each cell in raster order.
fn merge_order(
    fine: (usize, usize, usize),
    coarse: (usize, usize, usize),
    factor: usize,
) -> (Vec<usize>, usize) {
    let ft = fine.0 / coarse.0; // 1 when the temporal axis is flat
    let group = ft * factor * factor;
    let mut order = Vec::with_capacity(fine.0 * fine.1 * fine.2);
    for ct in 0..coarse.0 {
        for ch in 0..coarse.1 {
            for cw in 0..coarse.2 {
                for dt in 0..ft {
                    for dh in 0..factor {
                        for dw in 0..factor {
                            order.push(raster(
                                ct * ft + dt,
                                ch * factor + dh,
                                cw * factor + dw,
                                fine,
                            ));
                        }
                    }
                }
            }
        }
    }
    (order, group)
}

/// Pixel-row -> head-output-row permutation for unpatchify.
fn unpatch_permutation(cfg: &HvditConfig) -> Vec<usize> {
    let (t, h, w) = cfg.dims;
    let (pt, ph, pw) = cfg.patch;
    let grid = (t / pt, h / ph, w / pw);
    let p = pt * ph * pw;
    let mut perm = Vec::with_capacity(t * h * w);
    for ti in 0..t {
        for hi in 0..h {
            for wi in 0..w {
                let tok = raster(ti / pt, hi / ph, wi / pw, grid);
                let pp = ((ti % pt) * ph + hi % ph) * pw + wi % pw;
                perm.push(tok * p + pp);
            }
        }
    }
    perm
}

/// Build the token-input matrix `[tokens, in_ch]` from the (already
/// input-scaled) noisy state, the observed values, and the mask. Per-token
/// layout: all x entries (patch raster x channels), then all y, then the
/// mask pixels when the mask channel is enabled.
pub fn build_token_input(
    cfg: &HvditConfig,
    x_scaled: &Array4<f64>,
    y: &Array4<f64>,
    m: &Array3<f64>,
) -> Array2<f64> {
    let (t, h, w) = cfg.dims;
    let (pt, ph, pw) = cfg.patch;
    let c = cfg.channels;
    let grid = (t / pt, h / ph, w / pw);
    let p = pt * ph * pw;
    let tokens = grid.0 * grid.1 * grid.2;
    let mut out = Array2::zeros((tokens, cfg.in_channels()));
    for gt in 0..grid.0 {
        for gh in 0..grid.1 {
            for gw in 0..grid.2 {
                let tok = raster(gt, gh, gw, grid);
                for dt in 0..pt {
                    for dh in 0..ph {
                        for dw in 0..pw {
                            let (ti, hi, wi) = (gt * pt + dt, gh * ph + dh, gw * pw + dw);
                            let pp = (dt * ph + dh) * pw + dw;
                            for ci in 0..c {
                                out[[tok, pp * c + ci]] = x_scaled[[ti, hi, wi, ci]];
                                out[[tok, p * c + pp * c + ci]] = y[[ti, hi, wi, ci]];
                            }
                            if cfg.mask_channel {
                                out[[tok, 2 * p * c + pp]] = m[[ti, hi, wi]];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_of_one_is_self_only() {
        let lists = neighbor_lists((2, 3, 3), (1, 1, 1));
        for (i, l) in lists.iter().enumerate() {
            assert_eq!(l, &vec![i]);
        }
    }

    #[test]
    fn kernel_covering_grid_matches_global_lists() {
        let grid = (2, 3, 3);
        let lists = neighbor_lists(grid, (9, 9, 9));
        let all: Vec<usize> = (0..18).collect();
        for l in &lists {
            assert_eq!(l, &all);
        }
    }

    #[test]
    fn interior_window_size_matches_kernel_volume() {
        let lists = neighbor_lists((4, 8, 8), (2, 3, 3));
        // token (1,4,4): temporal window {1,2}, spatial {3,4,5}^2
        let center = raster(1, 4, 4, (4, 8, 8));
        assert_eq!(lists[center].len(), 2 * 3 * 3);
        // corner token gets a clipped window
        assert!(lists[0].len() < 2 * 3 * 3);
        // ascending order everywhere
        for l in &lists {
            assert!(l.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn merge_order_is_a_permutation_grouping_cells() {
        let (order, group) = merge_order((4, 4, 4), (2, 2, 2), 2);
        assert_eq!(group, 8);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..64).collect::<Vec<_>>());
        // first cell: tokens of the (0..2)^3 corner
        let grid = (4, 4, 4);
        let expect: Vec<usize> = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1)]
            .iter()
            .map(|&(t, h, w)| raster(t, h, w, grid))
            .collect();
        assert_eq!(&order[..8], &expect[..]);
    }

    #[test]
    fn flat_temporal_merge_groups_four() {
        let (order, group) = merge_order((1, 4, 4), (1, 2, 2), 2);
        assert_eq!(group, 4);
        assert_eq!(order.len(), 16);
    }

    #[test]
    fn unpatch_permutation_inverts_patchify() {
        let cfg = HvditConfig::tiny();
        let plan = HvditPlan::build(&cfg).unwrap();
        let (t, h, w) = cfg.dims;
        // pixel field with unique values, patchified through the x block
        let x = Array4::from_shape_fn((t, h, w, 1), |(ti, hi, wi, _)| {
            ((ti * h + hi) * w + wi) as f64
        });
        let y = Array4::zeros((t, h, w, 1));
        let m = Array3::zeros((t, h, w));
        let tokens = build_token_input(&cfg, &x, &y, &m);
        let p = cfg.patch.0 * cfg.patch.1 * cfg.patch.2;
        // flatten the x block rows exactly as the head reshape does
        let flat: Vec<f64> = (0..tokens.nrows())
            .flat_map(|tok| (0..p).map(move |pp| (tok, pp)))
            .map(|(tok, pp)| tokens[[tok, pp]])
            .collect();
        for (pix, &src) in plan.unpatch_perm.iter().enumerate() {
            assert_eq!(flat[src], pix as f64);
        }
    }

    #[test]
    fn token_input_layout_blocks() {
        let cfg = HvditConfig::tiny();
        let (t, h, w) = cfg.dims;
        let x = Array4::from_elem((t, h, w, 1), 2.0);
        let y = Array4::from_elem((t, h, w, 1), 3.0);
        let m = Array3::from_elem((t, h, w), 1.0);
        let tokens = build_token_input(&cfg, &x, &y, &m);
        let p = 2 * 4 * 4;
        for row in tokens.rows() {
            assert!(row.iter().take(p).all(|&v| v == 2.0));
            assert!(row.iter().skip(p).take(p).all(|&v| v == 3.0));
            assert!(row.iter().skip(2 * p).all(|&v| v == 1.0));
        }
        // ablated mask channel narrows the matrix
        let mut ab = cfg.clone();
        ab.mask_channel = false;
        let tokens = build_token_input(&ab, &x, &y, &m);
        assert_eq!(tokens.ncols(), 2 * p);
    }
}
