//! Forward pass, loss/gradient evaluation, and the finite-difference
//! gradient check for the hierarchical transformer.

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::diffusion::{Denoiser, DiffusionConfig};
use crate::error::{Result, VpdeError};
use crate::tape::{AttnPlan, NodeId, Tape};

use super::params::ParamRegistry;
use super::plan::{build_token_input, HvditPlan};
use super::HvditConfig;

/// One training sample: clean video, conditioning, noise level, and the
/// noise realization (kept explicit so losses are reproducible).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub x0: Array4<f64>,
    pub y: Array4<f64>,
    pub m: Array3<f64>,
    pub sigma: f64,
    pub eps: Array4<f64>,
}

/// The model: configuration, precomputed index plan, parameter registry,
/// and the flat parameter vector.
#[derive(Debug, Clone)]
pub struct HvditModel {
    pub cfg: HvditConfig,
    pub diffusion: DiffusionConfig,
    pub plan: Arc<HvditPlan>,
    pub registry: Arc<ParamRegistry>,
    pub params: Vec<f64>,
}

impl HvditModel {
    pub fn new(cfg: HvditConfig, diffusion: DiffusionConfig, seed: u64) -> Result<Self> {
        let plan = Arc::new(HvditPlan::build(&cfg)?);
        let registry = Arc::new(ParamRegistry::build(&cfg));
        let params = registry.init(seed);
        Ok(HvditModel { cfg, diffusion, plan, registry, params })
    }

    pub fn from_params(
        cfg: HvditConfig,
        diffusion: DiffusionConfig,
        params: Vec<f64>,
    ) -> Result<Self> {
        let plan = Arc::new(HvditPlan::build(&cfg)?);
        let registry = Arc::new(ParamRegistry::build(&cfg));
        if params.len() != registry.total {
            return Err(VpdeError::ConfigMismatch(format!(
                "parameter vector has {} entries, config requires {}",
                params.len(),
                registry.total
            )));
        }
        Ok(HvditModel { cfg, diffusion, plan, registry, params })
    }

    fn p(&self, t: &mut Tape, name: &str) -> NodeId {
        let info = self.registry.info(name);
        t.param(info.offset, info.shape.0, info.shape.1)
    }

    /// One adaLN-style block: modulated pre-norm attention and MLP, both
    /// gated; identity at zero modulation.
    fn block(
        &self,
        t: &mut Tape,
        prefix: &str,
        x: NodeId,
        cond: NodeId,
        neighbors: &AttnPlan,
        width: usize,
    ) -> NodeId {
        let heads = self.cfg.heads(width);
        let modw = self.p(t, &format!("{prefix}.mod.w"));
        let modb = self.p(t, &format!("{prefix}.mod.b"));
        let modv = t.matmul(cond, modw);
        let modv = t.add_row(modv, modb);
        let s1 = t.slice_cols(modv, 0, width);
        let b1 = t.slice_cols(modv, width, width);
        let g1 = t.slice_cols(modv, 2 * width, width);
        let s2 = t.slice_cols(modv, 3 * width, width);
        let b2 = t.slice_cols(modv, 4 * width, width);
        let g2 = t.slice_cols(modv, 5 * width, width);

        let h = t.rms_norm(x);
        let h = t.mod_scale_shift(h, s1, b1);
        let wq = self.p(t, &format!("{prefix}.attn.wq"));
        let wk = self.p(t, &format!("{prefix}.attn.wk"));
        let wv = self.p(t, &format!("{prefix}.attn.wv"));
        let wo = self.p(t, &format!("{prefix}.attn.wo"));
        let q = t.matmul(h, wq);
        let k = t.matmul(h, wk);
        let v = t.matmul(h, wv);
        let a = t.attention(q, k, v, neighbors.clone(), heads);
        let a = t.matmul(a, wo);
        let a = t.mul_row(a, g1);
        let x = t.add(x, a);

        let h = t.rms_norm(x);
        let h = t.mod_scale_shift(h, s2, b2);
        let w1 = self.p(t, &format!("{prefix}.mlp.w1"));
        let bb1 = self.p(t, &format!("{prefix}.mlp.b1"));
        let w2 = self.p(t, &format!("{prefix}.mlp.w2"));
        let bb2 = self.p(t, &format!("{prefix}.mlp.b2"));
        let h = t.matmul(h, w1);
        let h = t.add_row(h, bb1);
        let h = t.gelu(h);
        let h = t.matmul(h, w2);
        let h = t.add_row(h, bb2);
        let h = t.mul_row(h, g2);
        t.add(x, h)
    }

    /// Noise-level conditioning vector from sinusoidal features of c_noise
    /// through the mapping network.
    fn mapping(&self, t: &mut Tape, c_noise: f64) -> NodeId {
        let mw = self.cfg.mapping_width;
        let mut feat = Array2::zeros((1, mw));
        for i in 0..mw / 2 {
            let freq = 1e4f64.powf(-(i as f64) / (mw / 2) as f64);
            feat[[0, 2 * i]] = (c_noise * freq).sin();
            feat[[0, 2 * i + 1]] = (c_noise * freq).cos();
        }
        let mut x = t.constant(feat);
        for i in 0..self.cfg.mapping_depth {
            let w = self.p(t, &format!("mapping.{i}.w"));
            let b = self.p(t, &format!("mapping.{i}.b"));
            x = t.matmul(x, w);
            x = t.add_row(x, b);
            x = t.silu(x);
        }
        x
    }

    fn check_shape(&self, x: &Array4<f64>) -> Result<()> {
        let (dt, dh, dw) = self.cfg.dims;
        if x.dim() != (dt, dh, dw, self.cfg.channels) {
            let (a, b, c, d) = x.dim();
            return Err(VpdeError::ShapeMismatch {
                expected: vec![dt, dh, dw, self.cfg.channels],
                got: vec![a, b, c, d],
            });
        }
        Ok(())
    }

    /// Build the denoiser graph; returns the preconditioned estimate as a
    /// `[T*H*W, C]` pixel node.
    fn forward_graph(
        &self,
        t: &mut Tape,
        x_t: &Array4<f64>,
        y: &Array4<f64>,
        m: &Array3<f64>,
        sigma: f64,
    ) -> Result<NodeId> {
        if sigma <= 0.0 {
            return Err(VpdeError::ZeroSigma);
        }
        self.check_shape(x_t)?;
        self.check_shape(y)?;
        let pre = self.diffusion.precondition(sigma);
        let cfg = &self.cfg;
        let plan = &self.plan;
        let last = cfg.widths.len() - 1;

        let x_scaled = x_t.mapv(|v| v * pre.c_in);
        let xin = build_token_input(cfg, &x_scaled, y, m);
        let pe_w = self.p(t, "patch_embed.w");
        let pe_b = self.p(t, "patch_embed.b");
        let xin = t.constant(xin);
        let mut tok = t.matmul(xin, pe_w);
        tok = t.add_row(tok, pe_b);
        let pos0 = self.p(t, "pos.0");
        tok = t.add(tok, pos0);

        let cond = self.mapping(t, pre.c_noise);

        let mut skips = Vec::with_capacity(last);
        for l in 0..last {
            for d in 0..cfg.neighborhood_depth {
                tok = self.block(
                    t,
                    &format!("down.{l}.{d}"),
                    tok,
                    cond,
                    &plan.levels[l].neighbors,
                    cfg.widths[l],
                );
            }
            skips.push(tok);
            let lv = &plan.levels[l];
            let gather = lv.merge_gather.as_ref().unwrap().clone();
            tok = t.select_rows(tok, gather);
            tok = t.reshape(tok, plan.levels[l + 1].tokens, lv.group * cfg.widths[l]);
            let mw = self.p(t, &format!("merge.{l}.w"));
            let mb = self.p(t, &format!("merge.{l}.b"));
            tok = t.matmul(tok, mw);
            tok = t.add_row(tok, mb);
            let pos = self.p(t, &format!("pos.{}", l + 1));
            tok = t.add(tok, pos);
        }

        for d in 0..cfg.global_depth {
            tok = self.block(
                t,
                &format!("mid.{d}"),
                tok,
                cond,
                &plan.levels[last].neighbors,
                cfg.widths[last],
            );
        }

        for l in (0..last).rev() {
            let lv = &plan.levels[l];
            let sw = self.p(t, &format!("split.{l}.w"));
            let sb = self.p(t, &format!("split.{l}.b"));
            tok = t.matmul(tok, sw);
            tok = t.add_row(tok, sb);
            tok = t.reshape(tok, lv.tokens, cfg.widths[l]);
            let inverse = lv.merge_inverse.as_ref().unwrap().clone();
            tok = t.select_rows(tok, inverse);
            let kw = self.p(t, &format!("skip.{l}.w"));
            let skip = t.matmul(skips[l], kw);
            tok = t.add(tok, skip);
            for d in 0..cfg.neighborhood_depth {
                tok = self.block(
                    t,
                    &format!("up.{l}.{d}"),
                    tok,
                    cond,
                    &plan.levels[l].neighbors,
                    cfg.widths[l],
                );
            }
        }

        let w0 = cfg.widths[0];
        let hmw = self.p(t, "head.mod.w");
        let hmb = self.p(t, "head.mod.b");
        let modv = t.matmul(cond, hmw);
        let modv = t.add_row(modv, hmb);
        let s = t.slice_cols(modv, 0, w0);
        let b = t.slice_cols(modv, w0, w0);
        let h = t.rms_norm(tok);
        let h = t.mod_scale_shift(h, s, b);
        let hw = self.p(t, "head.w");
        let hb = self.p(t, "head.b");
        let mut out = t.matmul(h, hw);
        out = t.add_row(out, hb);

        let p = cfg.patch.0 * cfg.patch.1 * cfg.patch.2;
        out = t.reshape(out, plan.levels[0].tokens * p, cfg.channels);
        out = t.select_rows(out, plan.unpatch_perm.clone());
        let xt_flat = t.constant(pixels(x_t));
        let skip_term = t.scale(xt_flat, pre.c_skip);
        let out_term = t.scale(out, pre.c_out);
        let denoised = t.add(skip_term, out_term);
        if t.value(denoised).iter().any(|v| !v.is_finite()) {
            return Err(VpdeError::NonFiniteOutput);
        }
        Ok(denoised)
    }

    /// EDM loss and parameter gradient for one sample.
    pub fn sample_loss_grad(&self, s: &TrainSample) -> Result<(f64, Vec<f64>)> {
        let x_t = &s.x0 + &s.eps.mapv(|v| v * s.sigma);
        let mut tape = Tape::new(&self.params);
        let d = self.forward_graph(&mut tape, &x_t, &s.y, &s.m, s.sigma)?;
        let weight = self.diffusion.loss_weight(s.sigma);
        let loss = tape.mse_loss(d, pixels(&s.x0), weight);
        let value = tape.scalar(loss);
        let mut grad = vec![0.0; self.params.len()];
        tape.backward(loss, &mut grad);
        Ok((value, grad))
    }

    /// Mean loss and gradient over a batch. Samples evaluate in parallel;
    /// the reduction is sequential, so results are deterministic.
    pub fn batch_loss_grad(&self, batch: &[TrainSample]) -> Result<(f64, Vec<f64>)> {
        let results: Vec<Result<(f64, Vec<f64>)>> =
            batch.par_iter().map(|s| self.sample_loss_grad(s)).collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        let inv = 1.0 / batch.len() as f64;
        for (i, r) in results.into_iter().enumerate() {
            let (loss, g) = r?;
            if !loss.is_finite() {
                return Err(VpdeError::NonFiniteLoss { sigma: batch[i].sigma, sample: i });
            }
            total += loss * inv;
            for (acc, v) in grad.iter_mut().zip(g.iter()) {
                *acc += v * inv;
            }
        }
        Ok((total, grad))
    }

    /// Maximum relative error between analytic and central finite-difference
    /// gradients at `probes` random parameters, on a randomized model state.
    pub fn grad_check(&self, probes: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut params = self.params.clone();
        for v in params.iter_mut() {
            *v += noise.sample(&mut rng);
        }
        let model = HvditModel::from_params(self.cfg.clone(), self.diffusion, params)?;

        let (t, h, w) = self.cfg.dims;
        let c = self.cfg.channels;
        let unit = Normal::new(0.0, 1.0).unwrap();
        let sample = TrainSample {
            x0: Array4::from_shape_fn((t, h, w, c), |_| 0.5 * unit.sample(&mut rng)),
            y: Array4::from_shape_fn((t, h, w, c), |_| 0.5 * unit.sample(&mut rng)),
            m: Array3::from_shape_fn((t, h, w), |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }),
            sigma: 0.7,
            eps: Array4::from_shape_fn((t, h, w, c), |_| unit.sample(&mut rng)),
        };
        let (_, grad) = model.sample_loss_grad(&sample)?;

        let eval = |params: Vec<f64>| -> Result<f64> {
            let m = HvditModel::from_params(self.cfg.clone(), self.diffusion, params)?;
            let x_t = &sample.x0 + &sample.eps.mapv(|v| v * sample.sigma);
            let mut tape = Tape::new(&m.params);
            let d = m.forward_graph(&mut tape, &x_t, &sample.y, &sample.m, sample.sigma)?;
            let loss = tape.mse_loss(d, pixels(&sample.x0), m.diffusion.loss_weight(sample.sigma));
            Ok(tape.scalar(loss))
        };

        let h_fd = 1e-4;
        let mut max_err = 0.0f64;
        for _ in 0..probes {
            let idx = rng.gen_range(0..model.params.len());
            let mut plus = model.params.clone();
            plus[idx] += h_fd;
            let mut minus = model.params.clone();
            minus[idx] -= h_fd;
            let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h_fd);
            let analytic = grad[idx];
            if analytic.abs() < 1e-10 && numeric.abs() < 1e-10 {
                continue;
            }
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            max_err = max_err.max(err);
        }
        Ok(max_err)
    }

    /// Exact influence set of one input pixel: which output pixels can its
    /// perturbation reach through windows, merges, skips, and splits.
    /// With any global blocks present this is everything.
    pub fn influence_set(&self, pixel: (usize, usize, usize)) -> Array3<bool> {
        let cfg = &self.cfg;
        let plan = &self.plan;
        let last = cfg.widths.len() - 1;
        let (pt, ph, pw) = cfg.patch;
        let grid0 = plan.levels[0].grid;
        let start = ((pixel.0 / pt) * grid0.1 + pixel.1 / ph) * grid0.2 + pixel.2 / pw;

        let expand = |set: &[bool], neighbors: &AttnPlan| -> Vec<bool> {
            let mut out = set.to_vec();
            for (i, neigh) in neighbors.iter().enumerate() {
                if neigh.iter().any(|&j| set[j]) {
                    out[i] = true;
                }
            }
            out
        };

        let mut set = vec![false; plan.levels[0].tokens];
        set[start] = true;
        let mut skips: Vec<Vec<bool>> = Vec::new();
        for l in 0..last {
            for _ in 0..cfg.neighborhood_depth {
                set = expand(&set, &plan.levels[l].neighbors);
            }
            skips.push(set.clone());
            let gather = plan.levels[l].merge_gather.as_ref().unwrap();
            let group = plan.levels[l].group;
            let mut coarse = vec![false; plan.levels[l + 1].tokens];
            for (pos, &src) in gather.iter().enumerate() {
                if set[src] {
                    coarse[pos / group] = true;
                }
            }
            set = coarse;
        }
        for _ in 0..cfg.global_depth {
            set = expand(&set, &plan.levels[last].neighbors);
        }
        for l in (0..last).rev() {
            let gather = plan.levels[l].merge_gather.as_ref().unwrap();
            let group = plan.levels[l].group;
            let mut fine = vec![false; plan.levels[l].tokens];
            for (pos, &src) in gather.iter().enumerate() {
                if set[pos / group] {
                    fine[src] = true;
                }
            }
            for (f, s) in fine.iter_mut().zip(skips[l].iter()) {
                *f |= s;
            }
            set = fine;
            for _ in 0..cfg.neighborhood_depth {
                set = expand(&set, &plan.levels[l].neighbors);
            }
        }

        let (t, h, w) = cfg.dims;
        Array3::from_shape_fn((t, h, w), |(ti, hi, wi)| {
            let tok = ((ti / pt) * grid0.1 + hi / ph) * grid0.2 + wi / pw;
            set[tok]
        })
    }
}

impl Denoiser for HvditModel {
    fn denoise(
        &self,
        x_t: &Array4<f64>,
        y: &Array4<f64>,
        m: &Array3<f64>,
        sigma: f64,
    ) -> Result<Array4<f64>> {
        let mut tape = Tape::new(&self.params);
        let d = self.forward_graph(&mut tape, x_t, y, m, sigma)?;
        Ok(unpixels(tape.value(d), self.cfg.dims, self.cfg.channels))
    }
}

/// `[T,H,W,C] -> [T*H*W, C]` in raster order.
pub fn pixels(x: &Array4<f64>) -> Array2<f64> {
    let (t, h, w, c) = x.dim();
    x.to_owned().into_shape((t * h * w, c)).unwrap()
}

/// Inverse of [`pixels`].
pub fn unpixels(x: &Array2<f64>, dims: (usize, usize, usize), c: usize) -> Array4<f64> {
    x.to_owned().into_shape((dims.0, dims.1, dims.2, c)).unwrap()
}
