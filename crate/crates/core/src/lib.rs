//! Subject-specific reconstruction of undersampled multi-coil T1ρ-weighted
//! MR image series with an implicit neural representation.
//!
//! A sine-activated coordinate network maps `(x, y, TSL)` to a complex image
//! value. It is fitted directly to the acquired k-space under a normalized L1
//! data term, a per-voxel temporal Hankel nuclear-norm prior and a k-t
//! self-consistency prior, then finished with a hard data-consistency
//! projection. T1ρ maps follow from mono-exponential fitting.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the default `f64` precision.

pub mod config;
pub mod encoding;
pub mod error;
pub mod inr;
pub mod metrics;
pub mod phantom;
pub mod priors;
pub mod qmap;
pub mod sampling;
pub mod scalar;
pub mod tensor_io;
pub mod trainer;

pub use config::{load_config, DcGradient, ExperimentConfig, FitMethod, Mode};
pub use encoding::{Encoder, Fft2c, KtData};
pub use error::{Error, Result};
pub use inr::{CoordGrid, FourierEmbedding, MlpArch, MlpParams};
pub use phantom::{CoilMaps, ImageSeries, PhantomMaps, PhantomSpec};
pub use priors::hankel::HankelConfig;
pub use priors::spirit::SpiritKernel;
pub use sampling::SamplingMask;
pub use scalar::Real;
pub use trainer::{LossWeights, TrainReport};

pub type ImageSeries64 = ImageSeries<f64>;
pub type ImageSeries32 = ImageSeries<f32>;
pub type KtData64 = KtData<f64>;
pub type KtData32 = KtData<f32>;
pub type CoilMaps64 = CoilMaps<f64>;
pub type CoilMaps32 = CoilMaps<f32>;
pub type Mlp64 = MlpParams<f64>;
pub type Mlp32 = MlpParams<f32>;
pub type Encoder64 = Encoder<f64>;
pub type Encoder32 = Encoder<f32>;
pub type SpiritKernel64 = SpiritKernel<f64>;
pub type SpiritKernel32 = SpiritKernel<f32>;
