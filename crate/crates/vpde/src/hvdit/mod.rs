//! Hierarchical video diffusion transformer.
//!
//! Pixel-space tokenization with the conditioning values and observation
//! mask concatenated into every patch, neighborhood attention on the fine
//! grid, a merge/split hierarchy with U-Net style skips, global attention
//! at the bottleneck, and adaptive scale/shift/gate modulation from the
//! noise level. All arithmetic runs in f64 on the autodiff tape so the
//! training path can be verified against finite differences.

mod checkpoint;
mod model;
mod params;
mod plan;

pub use checkpoint::{
    join_u128, load_checkpoint, save_checkpoint, split_u128, Checkpoint, OptSnapshot,
    RngCounters,
};
pub use model::{pixels, unpixels, HvditModel, TrainSample};
pub use params::{closed_form_count, ParamInfo, ParamRegistry};
pub use plan::{build_token_input, HvditPlan, LevelPlan};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VpdeError};

/// Architecture hyperparameters. Token-grid shapes, neighbor lists, and the
/// parameter layout are all pure functions of this struct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HvditConfig {
    /// Input video shape (T, H, W) in pixels.
    pub dims: (usize, usize, usize),
    pub channels: usize,
    /// Spatiotemporal patch size (p_t, p_h, p_w).
    pub patch: (usize, usize, usize),
    /// Embedding width per hierarchy level; the last entry is the bottleneck.
    pub widths: Vec<usize>,
    /// Attention+MLP blocks per fine level (down and up paths each).
    pub neighborhood_depth: usize,
    /// Global-attention blocks at the bottleneck.
    pub global_depth: usize,
    pub head_dim: usize,
    /// Neighborhood attention window (k_t, k_h, k_w), clipped at borders.
    pub kernel: (usize, usize, usize),
    /// Token-merge factor between levels.
    pub downsample: usize,
    pub mapping_depth: usize,
    pub mapping_width: usize,
    /// MLP hidden width multiplier.
    pub mlp_ratio: usize,
    /// Concatenate the observation mask into each patch. Disabling this is
    /// the conditioning ablation: patches carry only (x_t, y).
    pub mask_channel: bool,
}

impl HvditConfig {
    /// Small configuration for 32x32x8 videos.
    pub fn desk_default() -> Self {
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
            mask_channel: true,
        }
    }

    /// Tiny configuration used by gradient and locality checks.
    pub fn tiny() -> Self {
        HvditConfig {
            dims: (4, 8, 8),
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
            mlp_ratio: 4,
            mask_channel: true,
        }
    }

    /// Full-scale reference configuration (recorded, not exercised by the
    /// test suite).
    pub fn reference_preset() -> Self {
        HvditConfig {
            dims: (20, 128, 128),
            channels: 1,
            patch: (2, 4, 4),
            widths: vec![384, 768],
            neighborhood_depth: 2,
            global_depth: 11,
            head_dim: 64,
            kernel: (2, 7, 7),
            downsample: 2,
            mapping_depth: 1,
            mapping_width: 768,
            mlp_ratio: 4,
            mask_channel: true,
        }
    }

    /// Number of attention heads at a given width.
    pub fn heads(&self, width: usize) -> usize {
        width / self.head_dim
    }

    /// Per-token input channel count after patch concatenation.
    pub fn in_channels(&self) -> usize {
        let (pt, ph, pw) = self.patch;
        let p = pt * ph * pw;
        let per_pixel = if self.mask_channel {
            2 * self.channels + 1
        } else {
            2 * self.channels
        };
        p * per_pixel
    }

    /// Per-token output channel count (one clean patch).
    pub fn out_channels(&self) -> usize {
        let (pt, ph, pw) = self.patch;
        pt * ph * pw * self.channels
    }

    /// Token-grid shape at every level, from fine to bottleneck.
    pub fn token_grids(&self) -> Vec<(usize, usize, usize)> {
        let (t, h, w) = self.dims;
        let (pt, ph, pw) = self.patch;
        let mut grids = vec![(t / pt, h / ph, w / pw)];
        for _ in 1..self.widths.len() {
            let (gt, gh, gw) = *grids.last().unwrap();
            let nt = if gt > 1 { gt / self.downsample } else { gt };
            grids.push((nt, gh / self.downsample, gw / self.downsample));
        }
        grids
    }

    pub fn validate(&self) -> Result<()> {
        let (t, h, w) = self.dims;
        let (pt, ph, pw) = self.patch;
        if self.channels == 0 || self.widths.is_empty() {
            return Err(VpdeError::InvalidConfig(
                "need at least one channel and one level".into(),
            ));
        }
        if pt == 0 || ph == 0 || pw == 0 || t % pt != 0 || h % ph != 0 || w % pw != 0 {
            return Err(VpdeError::IndivisibleDims(format!(
                "dims {:?} not divisible by patch {:?}",
                self.dims, self.patch
            )));
        }
        if self.head_dim == 0 || self.widths.iter().any(|&d| d % self.head_dim != 0) {
            return Err(VpdeError::InvalidConfig(
                "every width must be a multiple of head_dim".into(),
            ));
        }
        if self.downsample < 2 || self.mlp_ratio == 0 || self.mapping_depth == 0 {
            return Err(VpdeError::InvalidConfig(
                "downsample >= 2, mlp_ratio >= 1, mapping_depth >= 1".into(),
            ));
        }
        if self.mapping_width % 2 != 0 {
            return Err(VpdeError::InvalidConfig(
                "mapping_width must be even (sin/cos feature pairs)".into(),
            ));
        }
        let (kt, kh, kw) = self.kernel;
        if kt == 0 || kh == 0 || kw == 0 {
            return Err(VpdeError::InvalidConfig("kernel entries must be >= 1".into()));
        }
        // every merge must divide the spatial grid; the temporal axis only
        // participates while more than one temporal token remains
        let mut grid = (t / pt, h / ph, w / pw);
        for _ in 1..self.widths.len() {
            let (gt, gh, gw) = grid;
            if gh % self.downsample != 0 || gw % self.downsample != 0 {
                return Err(VpdeError::IndivisibleDims(format!(
                    "token grid {grid:?} not divisible by downsample {}",
                    self.downsample
                )));
            }
            let nt = if gt > 1 {
                if gt % self.downsample != 0 {
                    return Err(VpdeError::IndivisibleDims(format!(
                        "temporal token count {gt} not divisible by {}",
                        self.downsample
                    )));
                }
                gt / self.downsample
            } else {
                gt
            };
            grid = (nt, gh / self.downsample, gw / self.downsample);
        }
        Ok(())
    }
}
