//! Field containers and masking algebra shared by every other module.

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VpdeError};

/// PDE family a trajectory belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NavierStokes,
    Kolmogorov,
    WaveLayer,
    AllenCahn,
    Helmholtz,
}

impl Family {
    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "navier_stokes" | "ns" => Some(Family::NavierStokes),
            "kolmogorov" | "kf" => Some(Family::Kolmogorov),
            "wave_layer" | "wl" => Some(Family::WaveLayer),
            "allen_cahn" | "ac" => Some(Family::AllenCahn),
            "helmholtz" => Some(Family::Helmholtz),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::NavierStokes => "navier_stokes",
            Family::Kolmogorov => "kolmogorov",
            Family::WaveLayer => "wave_layer",
            Family::AllenCahn => "allen_cahn",
            Family::Helmholtz => "helmholtz",
        }
    }
}

/// A T x H x W x C single-precision grid of physical field values with
/// step metadata. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVideo {
    data: Array4<f32>,
    pub dt: f64,
    pub dx: f64,
    pub family: Family,
    pub seed: u64,
}

impl FieldVideo {
    pub fn new(data: Array4<f32>, dt: f64, dx: f64, family: Family, seed: u64) -> Result<Self> {
        let (t, h, w, c) = data.dim();
        if t < 1 || c < 1 || h != w {
            return Err(VpdeError::ShapeMismatch {
                expected: vec![1, h, h, 1],
                got: vec![t, h, w, c],
            });
        }
        if family == Family::Helmholtz && t != 2 {
            return Err(VpdeError::ShapeMismatch {
                expected: vec![2, h, w, c],
                got: vec![t, h, w, c],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(VpdeError::NonFiniteOutput);
        }
        Ok(FieldVideo { data, dt, dx, family, seed })
    }

    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    /// (T, H, W, C)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    /// Field data widened to f64 for model / metric computation.
    pub fn to_f64(&self) -> Array4<f64> {
        self.data.mapv(|v| v as f64)
    }
}

/// Kind of inference task an observation mask encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ContinuousSensors,
    ForwardFull,
    InverseFull,
    ForwardPartial,
    InversePartial,
    Unrestricted,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::ContinuousSensors => "continuous_sensors",
            TaskKind::ForwardFull => "forward_full",
            TaskKind::InverseFull => "inverse_full",
            TaskKind::ForwardPartial => "forward_partial",
            TaskKind::InversePartial => "inverse_partial",
            TaskKind::Unrestricted => "unrestricted",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        Some(match s {
            "continuous_sensors" | "continuous-sensors" => TaskKind::ContinuousSensors,
            "forward_full" | "forward-full" => TaskKind::ForwardFull,
            "inverse_full" | "inverse-full" => TaskKind::InverseFull,
            "forward_partial" | "forward-partial" => TaskKind::ForwardPartial,
            "inverse_partial" | "inverse-partial" => TaskKind::InversePartial,
            "unrestricted" => TaskKind::Unrestricted,
            _ => return None,
        })
    }
}

/// Descriptor of the observation pattern: which task, what observation
/// rate, and (for forward/inverse kinds) the anchor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub rate: f64,
    pub frame: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, rate: f64, frame: usize) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(VpdeError::RateOutOfRange(rate));
        }
        Ok(TaskSpec { kind, rate, frame })
    }

    pub fn continuous_sensors(rate: f64) -> Result<Self> {
        Self::new(TaskKind::ContinuousSensors, rate, 0)
    }

    pub fn forward_full() -> Self {
        TaskSpec { kind: TaskKind::ForwardFull, rate: 1.0, frame: 0 }
    }

    pub fn inverse_full(frames: usize) -> Self {
        TaskSpec { kind: TaskKind::InverseFull, rate: 1.0, frame: frames - 1 }
    }

    pub fn forward_partial(rate: f64) -> Result<Self> {
        Self::new(TaskKind::ForwardPartial, rate, 0)
    }

    pub fn inverse_partial(rate: f64, frames: usize) -> Result<Self> {
        Self::new(TaskKind::InversePartial, rate, frames - 1)
    }
}

/// Binary indicator of observed pixels plus the observed values and the
/// task descriptor that produced the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    mask: Array3<u8>,
    values: Array4<f32>,
    pub task: TaskSpec,
}

impl ObservationMask {
    pub fn new(mask: Array3<u8>, values: Array4<f32>, task: TaskSpec) -> Result<Self> {
        let (t, h, w) = mask.dim();
        let (vt, vh, vw, _) = values.dim();
        if (t, h, w) != (vt, vh, vw) {
            return Err(VpdeError::ShapeMismatch {
                expected: vec![t, h, w],
                got: vec![vt, vh, vw],
            });
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(VpdeError::InvalidConfig("mask entries must be 0 or 1".into()));
        }
        for ((ti, hi, wi, ci), &v) in values.indexed_iter() {
            let _ = ci;
            if mask[[ti, hi, wi]] == 0 && v != 0.0 {
                return Err(VpdeError::InvalidConfig(
                    "values must be zero where the mask is zero".into(),
                ));
            }
        }
        Ok(ObservationMask { mask, values, task })
    }

    /// Construct a mask with all-zero values (no observations filled yet).
    pub fn empty_values(mask: Array3<u8>, channels: usize, task: TaskSpec) -> Result<Self> {
        let (t, h, w) = mask.dim();
        Self::new(mask, Array4::zeros((t, h, w, channels)), task)
    }

    pub fn mask(&self) -> &Array3<u8> {
        &self.mask
    }

    pub fn values(&self) -> &Array4<f32> {
        &self.values
    }

    /// Number of observed (mask = 1) sites.
    pub fn popcount(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// y = x (.) m: fill the mask's value grid from a field video, leaving the
/// binary pattern untouched.
pub fn apply_mask(x: &FieldVideo, m: &ObservationMask) -> Result<ObservationMask> {
    let (t, h, w, c) = x.dims();
    let (mt, mh, mw) = m.mask.dim();
    if (t, h, w) != (mt, mh, mw) {
        return Err(VpdeError::ShapeMismatch {
            expected: vec![mt, mh, mw],
            got: vec![t, h, w],
        });
    }
    let mut values = Array4::<f32>::zeros((t, h, w, c));
    for ((ti, hi, wi), &bit) in m.mask.indexed_iter() {
        if bit == 1 {
            for ci in 0..c {
                values[[ti, hi, wi, ci]] = x.data()[[ti, hi, wi, ci]];
            }
        }
    }
    ObservationMask::new(m.mask.clone(), values, m.task)
}
