//! Flat parameter storage with a named registry.
//!
//! Every learnable tensor is a contiguous slice of one `Vec<f64>`; the
//! registry records name, shape, hierarchy level, and offset, which is
//! exactly what the checkpoint index serializes.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::HvditConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: (usize, usize),
    pub level: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct ParamRegistry {
    pub infos: Vec<ParamInfo>,
    pub total: usize,
    by_name: HashMap<String, usize>,
}

impl ParamRegistry {
    pub fn build(cfg: &HvditConfig) -> ParamRegistry {
        let mut reg = ParamRegistry { infos: Vec::new(), total: 0, by_name: HashMap::new() };
        let levels = cfg.widths.len();
        let last = levels - 1;
        let grids = cfg.token_grids();
        let mw = cfg.mapping_width;
        let w0 = cfg.widths[0];

        reg.add("patch_embed.w", (cfg.in_channels(), w0), 0);
        reg.add("patch_embed.b", (1, w0), 0);
        for (l, &grid) in grids.iter().enumerate() {
            let tokens = grid.0 * grid.1 * grid.2;
            reg.add(&format!("pos.{l}"), (tokens, cfg.widths[l]), l);
        }
        for i in 0..cfg.mapping_depth {
            reg.add(&format!("mapping.{i}.w"), (mw, mw), 0);
            reg.add(&format!("mapping.{i}.b"), (1, mw), 0);
        }
        for l in 0..last {
            for d in 0..cfg.neighborhood_depth {
                reg.add_block(&format!("down.{l}.{d}"), cfg, l);
            }
            let group = group_size(&grids, l, cfg.downsample);
            let (wf, wc) = (cfg.widths[l], cfg.widths[l + 1]);
            reg.add(&format!("merge.{l}.w"), (group * wf, wc), l);
            reg.add(&format!("merge.{l}.b"), (1, wc), l);
        }
        for d in 0..cfg.global_depth {
            reg.add_block(&format!("mid.{d}"), cfg, last);
        }
        for l in (0..last).rev() {
            let group = group_size(&grids, l, cfg.downsample);
            let (wf, wc) = (cfg.widths[l], cfg.widths[l + 1]);
            reg.add(&format!("split.{l}.w"), (wc, group * wf), l);
            reg.add(&format!("split.{l}.b"), (1, group * wf), l);
            reg.add(&format!("skip.{l}.w"), (wf, wf), l);
            for d in 0..cfg.neighborhood_depth {
                reg.add_block(&format!("up.{l}.{d}"), cfg, l);
            }
        }
        reg.add("head.mod.w", (mw, 2 * w0), 0);
        reg.add("head.mod.b", (1, 2 * w0), 0);
        reg.add("head.w", (w0, cfg.out_channels()), 0);
        reg.add("head.b", (1, cfg.out_channels()), 0);
        reg
    }

    fn add(&mut self, name: &str, shape: (usize, usize), level: usize) {
        self.by_name.insert(name.to_string(), self.infos.len());
        self.infos.push(ParamInfo {
            name: name.to_string(),
            shape,
            level,
            offset: self.total,
        });
        self.total += shape.0 * shape.1;
    }

    /// One attention+MLP block with its modulation projection.
    fn add_block(&mut self, prefix: &str, cfg: &HvditConfig, level: usize) {
        let d = cfg.widths[level];
        let mw = cfg.mapping_width;
        let hidden = cfg.mlp_ratio * d;
        self.add(&format!("{prefix}.mod.w"), (mw, 6 * d), level);
        self.add(&format!("{prefix}.mod.b"), (1, 6 * d), level);
        for n in ["wq", "wk", "wv", "wo"] {
            self.add(&format!("{prefix}.attn.{n}"), (d, d), level);
        }
        self.add(&format!("{prefix}.mlp.w1"), (d, hidden), level);
        self.add(&format!("{prefix}.mlp.b1"), (1, hidden), level);
        self.add(&format!("{prefix}.mlp.w2"), (hidden, d), level);
        self.add(&format!("{prefix}.mlp.b2"), (1, d), level);
    }

    pub fn info(&self, name: &str) -> &ParamInfo {
        &self.infos[*self.by_name.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    /// Deterministic initialization: modulation projections and the output
    /// head start at exactly zero (identity blocks, zero raw output),
    /// biases at zero, position embeddings small, weights at N(0, 1/fan_in).
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos_dist = Normal::new(0.0, 0.02).unwrap();
        let mut params = vec![0.0; self.total];
        for info in &self.infos {
            let slot = &mut params[info.offset..info.offset + info.shape.0 * info.shape.1];
            let zero = info.name.contains(".mod.") || info.name.starts_with("head.")
                || info.name.ends_with(".b") || info.name.ends_with("b1") || info.name.ends_with("b2");
            if zero {
                continue;
            }
            if info.name.starts_with("pos.") {
                for v in slot.iter_mut() {
                    *v = pos_dist.sample(&mut rng);
                }
            } else {
                let dist = Normal::new(0.0, 1.0 / (info.shape.0 as f64).sqrt()).unwrap();
                for v in slot.iter_mut() {
                    *v = dist.sample(&mut rng);
                }
            }
        }
        params
    }
}

fn group_size(grids: &[(usize, usize, usize)], level: usize, factor: usize) -> usize {
    let ft = grids[level].0 / grids[level + 1].0;
    ft * factor * factor
}

/// Parameter count as an independent closed-form function of the config.
pub fn closed_form_count(cfg: &HvditConfig) -> usize {
    let grids = cfg.token_grids();
    let last = cfg.widths.len() - 1;
    let mw = cfg.mapping_width;
    let w0 = cfg.widths[0];
    let block = |d: usize| {
        let hidden = cfg.mlp_ratio * d;
        mw * 6 * d + 6 * d + 4 * d * d + d * hidden + hidden + hidden * d + d
    };
    let mut total = cfg.in_channels() * w0 + w0; // patch embed
    for (l, g) in grids.iter().enumerate() {
        total += g.0 * g.1 * g.2 * cfg.widths[l]; // positions
    }
    total += cfg.mapping_depth * (mw * mw + mw);
    for l in 0..last {
        let group = group_size(&grids, l, cfg.downsample);
        let (wf, wc) = (cfg.widths[l], cfg.widths[l + 1]);
        total += 2 * cfg.neighborhood_depth * block(wf); // down + up stacks
        total += group * wf * wc + wc; // merge
        total += wc * group * wf + group * wf; // split
        total += wf * wf; // skip projection
    }
    total += cfg.global_depth * block(cfg.widths[last]);
    total += mw * 2 * w0 + 2 * w0 + w0 * cfg.out_channels() + cfg.out_channels();
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_total_matches_closed_form() {
        for cfg in [
            HvditConfig::tiny(),
            HvditConfig::desk_default(),
            HvditConfig::reference_preset(),
        ] {
            let reg = ParamRegistry::build(&cfg);
            assert_eq!(reg.total, closed_form_count(&cfg), "{cfg:?}");
        }
    }

    #[test]
    fn offsets_are_contiguous_and_names_unique() {
        let reg = ParamRegistry::build(&HvditConfig::tiny());
        let mut expected = 0;
        let mut names = std::collections::HashSet::new();
        for info in &reg.infos {
            assert_eq!(info.offset, expected);
            expected += info.shape.0 * info.shape.1;
            assert!(names.insert(info.name.clone()), "duplicate {}", info.name);
        }
        assert_eq!(expected, reg.total);
    }

    #[test]
    fn init_zeroes_modulation_and_head() {
        let cfg = HvditConfig::tiny();
        let reg = ParamRegistry::build(&cfg);
        let params = reg.init(5);
        for name in ["down.0.0.mod.w", "head.w", "head.b", "mid.0.mlp.b1"] {
            let info = reg.info(name);
            let slot = &params[info.offset..info.offset + info.shape.0 * info.shape.1];
            assert!(slot.iter().all(|&v| v == 0.0), "{name} not zero-initialized");
        }
        let wq = reg.info("down.0.0.attn.wq");
        let slot = &params[wq.offset..wq.offset + wq.shape.0 * wq.shape.1];
        assert!(slot.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let reg = ParamRegistry::build(&HvditConfig::tiny());
        assert_eq!(reg.init(7), reg.init(7));
        assert_ne!(reg.init(7), reg.init(8));
    }
}
