//! Explicit physics priors: per-voxel temporal Hankel low-rank and k-t
//! self-consistency.

pub mod hankel;
pub mod linalg;
pub mod spirit;

pub use hankel::{hankel_adjoint, hankel_build, loss_hk, nuclear_norm_and_subgrad, HankelConfig};
pub use linalg::{CMat, Svd};
pub use spirit::{calibrate_spirit, SpiritKernel};
