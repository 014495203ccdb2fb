//! Checkpoint files: the VPDE container framing with an `f64le` payload
//! holding the flat parameter vector (plus optimizer moments when saved
//! mid-training) and a JSON index of every tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{f64_from_payload, f64_payload, read_raw_json, write_raw_json};
use crate::diffusion::DiffusionConfig;
use crate::error::{Result, VpdeError};

use super::model::HvditModel;
use super::params::ParamRegistry;
use super::HvditConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: [usize; 2],
    level: usize,
    offset: usize,
}

/// RNG stream positions for bit-exact training resume. ChaCha word
/// positions are stored as (lo, hi) u64 pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCounters {
    pub data_pos: (u64, u64),
    pub noise_pos: (u64, u64),
    pub mask_counter: u64,
}

pub fn split_u128(v: u128) -> (u64, u64) {
    (v as u64, (v >> 64) as u64)
}

pub fn join_u128(v: (u64, u64)) -> u128 {
    v.0 as u128 | ((v.1 as u128) << 64)
}

/// Optimizer moments and step counter saved alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptSnapshot {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: String,
    dtype: String,
    model: HvditConfig,
    diffusion: DiffusionConfig,
    param_count: usize,
    index: Vec<IndexEntry>,
    opt_step: Option<u64>,
    rng: Option<RngCounters>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: HvditConfig,
    pub diffusion: DiffusionConfig,
    pub params: Vec<f64>,
    pub opt: Option<OptSnapshot>,
    pub rng: Option<RngCounters>,
}

impl Checkpoint {
    pub fn into_model(self) -> Result<HvditModel> {
        HvditModel::from_params(self.model, self.diffusion, self.params)
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &HvditModel,
    opt: Option<&OptSnapshot>,
    rng: Option<RngCounters>,
) -> Result<()> {
    let index = model
        .registry
        .infos
        .iter()
        .map(|i| IndexEntry {
            name: i.name.clone(),
            shape: [i.shape.0, i.shape.1],
            level: i.level,
            offset: i.offset,
        })
        .collect();
    let header = CheckpointHeader {
        kind: "hvdit-checkpoint".into(),
        dtype: "f64le".into(),
        model: model.cfg.clone(),
        diffusion: model.diffusion,
        param_count: model.params.len(),
        index,
        opt_step: opt.map(|o| o.step),
        rng,
    };
    let mut values = model.params.clone();
    if let Some(o) = opt {
        values.extend_from_slice(&o.m);
        values.extend_from_slice(&o.v);
    }
    write_raw_json(path, &header, &f64_payload(&values))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (header, payload): (CheckpointHeader, Vec<u8>) = read_raw_json(path)?;
    if header.dtype != "f64le" {
        return Err(VpdeError::BadHeader(format!(
            "expected dtype f64le, got {}",
            header.dtype
        )));
    }
    let registry = ParamRegistry::build(&header.model);
    if header.param_count != registry.total {
        return Err(VpdeError::ConfigMismatch(format!(
            "header lists {} parameters, config requires {}",
            header.param_count, registry.total
        )));
    }
    let values = f64_from_payload(&payload)?;
    let n = registry.total;
    let expected = if header.opt_step.is_some() { 3 * n } else { n };
    if values.len() != expected {
        return Err(VpdeError::PayloadLengthMismatch {
            expected: expected * 8,
            got: values.len() * 8,
        });
    }
    let params = values[..n].to_vec();
    let opt = header.opt_step.map(|step| OptSnapshot {
        step,
        m: values[n..2 * n].to_vec(),
        v: values[2 * n..].to_vec(),
    });
    Ok(Checkpoint {
        model: header.model,
        diffusion: header.diffusion,
        params,
        opt,
        rng: header.rng,
    })
}
