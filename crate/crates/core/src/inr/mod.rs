//! Coordinate network: Fourier-feature embedding, sine-activated MLP with
//! embedding skip connections, exact reverse-mode gradients and checkpoints.

mod checkpoint;
mod embedding;
mod mlp;
mod trig;

pub use checkpoint::{load_params, load_params_checked, save_params};
pub use embedding::{CoordGrid, FourierEmbedding};
pub use mlp::{Dense, ForwardCache, InitScheme, MlpArch, MlpParams};
pub(crate) use mlp::to_complex;
