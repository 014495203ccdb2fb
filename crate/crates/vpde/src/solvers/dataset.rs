//! Trajectory dataset generation: per-family initial conditions, parallel
//! simulation with per-trajectory seeds, and the manifest JSON.

use std::path::{Path, PathBuf};

use ndarray::Array4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{read_container, write_container};
use crate::error::{Result, VpdeError};
use crate::fields::{Family, FieldVideo};
use crate::grf::{sample_grf_grid, GrfSpec};
use crate::solvers::allen_cahn::{simulate_allen_cahn, AcConfig};
use crate::solvers::helmholtz::{solve_helmholtz, HelmholtzConfig};
use crate::solvers::ns::{simulate_ns, NsConfig};
use crate::solvers::wave::{simulate_wave_layer, WaveLayerConfig};

/// Per-family simulation configuration for dataset generation.
#[derive(Debug, Clone)]
pub enum FamilyGenerator {
    NavierStokes(NsConfig),
    Kolmogorov { cfg: NsConfig, warmup_steps: usize },
    WaveLayer(WaveLayerConfig),
    AllenCahn(AcConfig),
    Helmholtz(HelmholtzConfig),
}

impl FamilyGenerator {
    pub fn desk_default(family: Family, n: usize, frames: usize) -> FamilyGenerator {
        match family {
            Family::NavierStokes => {
                FamilyGenerator::NavierStokes(NsConfig::desk_navier_stokes(n, frames))
            }
            Family::Kolmogorov => FamilyGenerator::Kolmogorov {
                cfg: NsConfig::desk_kolmogorov(n, frames),
                warmup_steps: 400,
            },
            Family::WaveLayer => {
                FamilyGenerator::WaveLayer(WaveLayerConfig::desk_default(n, frames))
            }
            Family::AllenCahn => FamilyGenerator::AllenCahn(AcConfig::desk_default(n, frames)),
            Family::Helmholtz => FamilyGenerator::Helmholtz(HelmholtzConfig::desk_default(n, 0)),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            FamilyGenerator::NavierStokes(_) => Family::NavierStokes,
            FamilyGenerator::Kolmogorov { .. } => Family::Kolmogorov,
            FamilyGenerator::WaveLayer(_) => Family::WaveLayer,
            FamilyGenerator::AllenCahn(_) => Family::AllenCahn,
            FamilyGenerator::Helmholtz(_) => Family::Helmholtz,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        match self {
            FamilyGenerator::NavierStokes(c) => [c.frames, c.n, c.n, 1],
            FamilyGenerator::Kolmogorov { cfg, .. } => [cfg.frames, cfg.n, cfg.n, 1],
            FamilyGenerator::WaveLayer(c) => [c.frames, c.n, c.n, 1],
            FamilyGenerator::AllenCahn(c) => [c.frames, c.n, c.n, 1],
            FamilyGenerator::Helmholtz(c) => [2, c.n, c.n, 1],
        }
    }

    /// Simulate one trajectory deterministically from its seed.
    pub fn generate_one(&self, seed: u64) -> Result<FieldVideo> {
        match self {
            FamilyGenerator::NavierStokes(cfg) => {
                let mut grf = GrfSpec::new(cfg.n, seed);
                grf.amplitude = 1.0;
                let grid = sample_grf_grid(&grf)?;
                let w0 = grid_video(&grid, cfg.n, Family::NavierStokes, seed)?;
                simulate_ns(cfg, &w0)
            }
            FamilyGenerator::Kolmogorov { cfg, warmup_steps } => {
                let mut grf = GrfSpec::new(cfg.n, seed);
                grf.amplitude = 1.0;
                let grid = sample_grf_grid(&grf)?;
                let w0 = grid_video(&grid, cfg.n, Family::NavierStokes, seed)?;
                // spin up toward the attractor, then record
                let mut warm_cfg = *cfg;
                warm_cfg.frames = 2;
                warm_cfg.frame_stride = (*warmup_steps).max(1);
                let warm = simulate_ns(&warm_cfg, &w0)?;
                let last = warm.frames() - 1;
                let warm_grid = ndarray::Array2::from_shape_fn((cfg.n, cfg.n), |(r, c)| {
                    warm.data()[[last, r, c, 0]] as f64
                });
                let w1 = grid_video(&warm_grid, cfg.n, Family::NavierStokes, seed)?;
                simulate_ns(cfg, &w1)
            }
            FamilyGenerator::WaveLayer(cfg) => simulate_wave_layer(cfg, seed).map(|(v, _)| v),
            FamilyGenerator::AllenCahn(cfg) => {
                let mut grf = GrfSpec::new(cfg.n, seed);
                grf.amplitude = 0.6;
                let grid = sample_grf_grid(&grf)?.mapv(|v| v.tanh());
                let u0 = grid_video(&grid, cfg.n, Family::AllenCahn, seed)?;
                simulate_allen_cahn(cfg, &u0)
            }
            FamilyGenerator::Helmholtz(cfg) => {
                let mut grf = cfg.source;
                grf.seed = seed;
                let grid = sample_grf_grid(&grf)?;
                let a = grid_video(&grid, cfg.n, Family::NavierStokes, seed)?;
                solve_helmholtz(cfg, &a)
            }
        }
    }
}

fn grid_video(grid: &ndarray::Array2<f64>, n: usize, family: Family, seed: u64) -> Result<FieldVideo> {
    let data = Array4::from_shape_fn((1, n, n, 1), |(_, r, c, _)| grid[[r, c]] as f32);
    FieldVideo::new(data, 0.0, 1.0 / n as f64, family, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Manifest JSON listing the containers of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub family: String,
    pub count: usize,
    pub dims: [usize; 4],
    pub seed: u64,
    pub files: Vec<String>,
    pub split: SplitIndices,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// An on-disk trajectory dataset: a manifest plus its containers.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub manifest: Manifest,
    pub dir: PathBuf,
}

impl TrajectoryDataset {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(TrajectoryDataset { manifest, dir })
    }

    pub fn len(&self) -> usize {
        self.manifest.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.files.is_empty()
    }

    pub fn load(&self, index: usize) -> Result<FieldVideo> {
        read_container(&self.dir.join(&self.manifest.files[index]))
    }

    pub fn load_split(&self, indices: &[usize]) -> Result<Vec<FieldVideo>> {
        indices.iter().map(|&i| self.load(i)).collect()
    }
}

/// Generate `count` trajectories with per-trajectory seeds `seed + i`,
/// write containers and a manifest under `out_dir`.
pub fn generate_dataset(
    gen: &FamilyGenerator,
    count: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<TrajectoryDataset> {
    std::fs::create_dir_all(out_dir)?;
    let files: Vec<String> = (0..count).map(|i| format!("traj_{i:05}.vpde")).collect();

    let results: Vec<Result<()>> = files
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let video = gen.generate_one(seed + i as u64)?;
            write_container(&out_dir.join(name), &video)
        })
        .collect();
    for r in results {
        r?;
    }

    // val split: an eighth of the data once there is enough of it
    let val_count = if count >= 16 { count / 8 } else { 0 };
    let split = SplitIndices {
        train: (0..count - val_count).collect(),
        val: (count - val_count..count).collect(),
    };
    let manifest = Manifest {
        family: gen.family().as_str().into(),
        count,
        dims: gen.dims(),
        seed,
        files,
        split,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out_dir.join(MANIFEST_NAME), json)?;
    Ok(TrajectoryDataset { manifest, dir: out_dir.to_path_buf() })
}

/// Validate a family/grid/frame combination before building a generator.
pub fn generator_for(family: Family, n: usize, frames: usize) -> Result<FamilyGenerator> {
    if family == Family::Helmholtz && frames != 2 {
        return Err(VpdeError::InvalidConfig(
            "helmholtz datasets always have exactly 2 frames".into(),
        ));
    }
    Ok(FamilyGenerator::desk_default(family, n, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_writes_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        let gen = FamilyGenerator::desk_default(Family::WaveLayer, 32, 4);
        let ds = generate_dataset(&gen, 0, 7, dir.path()).unwrap();
        assert!(ds.is_empty());
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
        let reopened = TrajectoryDataset::open(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(reopened.manifest.count, 0);
    }

    #[test]
    fn wave_layer_dataset_has_requested_shape() {
        let dir = tempfile::tempdir().unwrap();
        let gen = FamilyGenerator::desk_default(Family::WaveLayer, 32, 8);
        let ds = generate_dataset(&gen, 8, 7, dir.path()).unwrap();
        assert_eq!(ds.len(), 8);
        for i in 0..8 {
            let v = ds.load(i).unwrap();
            assert_eq!(v.dims(), (8, 32, 32, 1));
        }
        // all 8 trajectories are training data at this size
        assert_eq!(ds.manifest.split.train.len(), 8);
        assert!(ds.manifest.split.val.is_empty());
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let gen = FamilyGenerator::desk_default(Family::AllenCahn, 16, 3);
        generate_dataset(&gen, 3, 11, dir_a.path()).unwrap();
        generate_dataset(&gen, 3, 11, dir_b.path()).unwrap();
        for name in ["manifest.json", "traj_00000.vpde", "traj_00002.vpde"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_trajectories() {
        let gen = FamilyGenerator::desk_default(Family::NavierStokes, 16, 2);
        let a = gen.generate_one(1).unwrap();
        let b = gen.generate_one(2).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn helmholtz_generator_packs_two_frames() {
        let gen = FamilyGenerator::desk_default(Family::Helmholtz, 16, 2);
        let v = gen.generate_one(3).unwrap();
        assert_eq!(v.frames(), 2);
    }
}
