//! Observation-mask constructors defining every inference task and the
//! unified multi-task training distribution.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VpdeError};
use crate::fields::{ObservationMask, TaskKind, TaskSpec};

/// Counted deterministic mask stream: identical (seed, counter) pairs yield
/// identical masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskRng {
    pub seed: u64,
    pub counter: u64,
}

impl MaskRng {
    pub fn new(seed: u64) -> Self {
        MaskRng { seed, counter: 0 }
    }

    /// Draw the next per-mask rng, advancing the counter.
    fn next_rng(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.counter);
        self.counter += 1;
        rng
    }
}

/// Seeded Fisher-Yates prefix: the first `k` entries of a uniformly random
/// permutation of 0..n.
fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut items: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n.saturating_sub(1)) {
        let j = rng.gen_range(i..n);
        items.swap(i, j);
    }
    items.truncate(k);
    items
}

/// Fixed sparse sensor sites reporting values at every time step:
/// floor(rate * H * W) spatial sites, constant across frames.
pub fn continuous_sensor_mask(
    t: usize,
    h: usize,
    w: usize,
    rate: f64,
    rng: &mut MaskRng,
) -> Result<ObservationMask> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(VpdeError::RateOutOfRange(rate));
    }
    let task = TaskSpec::new(TaskKind::ContinuousSensors, rate, 0)?;
    let count = ((rate * (h * w) as f64).floor() as usize).min(h * w);
    let mut r = rng.next_rng();
    let sites = sample_without_replacement(h * w, count, &mut r);
    let mut mask = Array3::<u8>::zeros((t, h, w));
    for site in sites {
        let (row, col) = (site / w, site % w);
        for ti in 0..t {
            mask[[ti, row, col]] = 1;
        }
    }
    ObservationMask::empty_values(mask, 1, task)
}

/// Observation confined to a single anchor frame; `rate = 1` gives the
/// fully observed forward/inverse variants.
pub fn frame_mask(
    t: usize,
    h: usize,
    w: usize,
    frame: usize,
    rate: f64,
    rng: &mut MaskRng,
) -> Result<ObservationMask> {
    if frame >= t {
        return Err(VpdeError::FrameOutOfRange { frame, frames: t });
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(VpdeError::RateOutOfRange(rate));
    }
    let kind = match (frame, rate) {
        (0, r) if r >= 1.0 => TaskKind::ForwardFull,
        (f, r) if f == t - 1 && r >= 1.0 => TaskKind::InverseFull,
        (0, _) => TaskKind::ForwardPartial,
        (f, _) if f == t - 1 => TaskKind::InversePartial,
        _ => TaskKind::Unrestricted,
    };
    let task = TaskSpec::new(kind, rate, frame)?;
    let count = ((rate * (h * w) as f64).floor() as usize).min(h * w);
    let mut r = rng.next_rng();
    let sites = sample_without_replacement(h * w, count, &mut r);
    let mut mask = Array3::<u8>::zeros((t, h, w));
    for site in sites {
        mask[[frame, site / w, site % w]] = 1;
    }
    ObservationMask::empty_values(mask, 1, task)
}

/// Build the mask for an explicit task spec.
pub fn mask_for_task(
    t: usize,
    h: usize,
    w: usize,
    task: &TaskSpec,
    rng: &mut MaskRng,
) -> Result<ObservationMask> {
    match task.kind {
        TaskKind::ContinuousSensors => continuous_sensor_mask(t, h, w, task.rate, rng),
        TaskKind::ForwardFull => frame_mask(t, h, w, 0, 1.0, rng),
        TaskKind::InverseFull => frame_mask(t, h, w, t - 1, 1.0, rng),
        TaskKind::ForwardPartial => frame_mask(t, h, w, 0, task.rate, rng),
        TaskKind::InversePartial => frame_mask(t, h, w, t - 1, task.rate, rng),
        TaskKind::Unrestricted => {
            // per-pixel Bernoulli over the whole spatiotemporal grid
            let mut r = rng.next_rng();
            let mask = Array3::from_shape_fn((t, h, w), |_| {
                if r.gen_bool(task.rate) {
                    1u8
                } else {
                    0u8
                }
            });
            ObservationMask::empty_values(mask, 1, *task)
        }
    }
}

/// The six tasks of the unified training mixture.
pub fn unified_tasks(t: usize) -> [TaskSpec; 6] {
    [
        TaskSpec { kind: TaskKind::ContinuousSensors, rate: 0.03, frame: 0 },
        TaskSpec { kind: TaskKind::ContinuousSensors, rate: 0.01, frame: 0 },
        TaskSpec { kind: TaskKind::ForwardFull, rate: 1.0, frame: 0 },
        TaskSpec { kind: TaskKind::InverseFull, rate: 1.0, frame: t - 1 },
        TaskSpec { kind: TaskKind::ForwardPartial, rate: 0.03, frame: 0 },
        TaskSpec { kind: TaskKind::InversePartial, rate: 0.03, frame: t - 1 },
    ]
}

/// Draw one of the six unified tasks uniformly and build its mask.
pub fn sample_unified_task(
    t: usize,
    h: usize,
    w: usize,
    rng: &mut MaskRng,
) -> Result<ObservationMask> {
    let tasks = unified_tasks(t);
    let mut r = rng.next_rng();
    let task = tasks[r.gen_range(0..tasks.len())];
    mask_for_task(t, h, w, &task, rng)
}
