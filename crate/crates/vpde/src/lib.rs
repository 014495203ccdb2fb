//! Desk-scale laboratory for PDE trajectory generation and mask-conditioned
//! pixel-space video diffusion surrogates.
//!
//! The pipeline: spectral/finite-difference solvers generate trajectory
//! datasets ([`solvers`]), observation masks define inference tasks
//! ([`masks`]), an EDM-style diffusion stack ([`diffusion`]) trains a
//! hierarchical video diffusion transformer ([`hvdit`]) via [`train`], and
//! [`eval`] reports relative-l2 error tables.

pub mod container;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fields;
pub mod fftutil;
pub mod grf;
pub mod hvdit;
pub mod masks;
pub mod metrics;
pub mod solvers;
pub mod stats;
pub mod tape;
pub mod train;

pub use error::{Result, VpdeError};
pub use fields::{apply_mask, Family, FieldVideo, ObservationMask, TaskKind, TaskSpec};
pub use metrics::{per_frame_error, relative_l2, relative_l2_masked, relative_l2_video};
