//! Loss assembly, Adam optimization and the data-consistency projection.

mod adam;
mod loss;
mod recon;
mod report;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use loss::{evaluate_loss, image_loss, loss_dc, total_loss, LossBreakdown, LossWeights, Problem};
pub use recon::{dc_projection, reconstruct, Reconstruction, TrainOptions};
pub use report::{IterRecord, ReportSummary, TrainReport};
