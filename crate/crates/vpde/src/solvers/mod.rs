//! Ground-truth trajectory generation for the five PDE families.

pub mod allen_cahn;
pub mod dataset;
pub mod helmholtz;
pub mod ns;
pub mod wave;

pub use allen_cahn::{simulate_allen_cahn, AcConfig};
pub use dataset::{
    generate_dataset, generator_for, FamilyGenerator, Manifest, TrajectoryDataset, MANIFEST_NAME,
};
pub use helmholtz::{solve_helmholtz, HelmholtzConfig};
pub use ns::{simulate_ns, Forcing, NsConfig};
pub use wave::{sample_layered_speed, simulate_wave_layer, WaveLayerConfig};
