use std::path::PathBuf;

use super::adam::{adam_step, AdamState};
use super::loss::{evaluate_loss, total_loss, LossWeights, Problem};
use super::report::{IterRecord, ReportSummary, TrainReport};
use crate::config::{ExperimentConfig, Stage};
use crate::encoding::{apply_mask, apply_mask_complement, Encoder, KtData};
use crate::error::{Error, Result};
use crate::inr::{save_params, InitScheme, MlpArch, MlpParams};
use crate::phantom::ImageSeries;
use crate::priors::spirit::SpiritKernel;
use crate::sampling::SamplingMask;
use crate::scalar::Real;

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where to save the last finite parameters if training diverges.
    pub checkpoint_dir: Option<PathBuf>,
}

pub struct Reconstruction<T> {
    /// Network prediction after the data-consistency projection.
    pub image: ImageSeries<T>,
    /// Raw network prediction.
    pub prediction: ImageSeries<T>,
    pub params: MlpParams<T>,
    pub report: TrainReport,
}

impl ExperimentConfig {
    pub fn arch(&self) -> MlpArch {
        MlpArch {
            n_e: self.n_e,
            hidden: self.hidden,
            depth: self.depth,
            skips: self.skips.clone(),
            omega0: self.omega0,
        }
    }

    pub fn init_scheme(&self) -> InitScheme {
        if self.paper_literal_init {
            InitScheme::PaperLiteral
        } else {
            InitScheme::Standard
        }
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.lambda1, self.lambda2)
    }
}

/// `E_full*((I - M) E_full pred + M y)`: keeps the predicted k-space only where
/// nothing was acquired.
///
/// Masked re-encoding of the result reproduces `y` exactly only when
/// `E_full` is unitary (a single coil of unit modulus). With several coils
/// `E_full E_full*` is a projector, so the samples are matched only up to the
/// part of the merged k-space outside the range of the encoder.
pub fn dc_projection<T: Real>(
    pred: &ImageSeries<T>,
    y: &KtData<T>,
    mask: &SamplingMask,
    encoder: &Encoder<T>,
) -> Result<ImageSeries<T>> {
    let k = encoder.forward_full(pred)?;
    let mut merged = apply_mask_complement(&k, mask)?;
    let acquired = apply_mask(y, mask)?;
    merged.data.iter_mut().zip(&acquired.data).for_each(|(a, &b)| *a += b);
    encoder.adjoint_full_with_tsl(&merged, &pred.tsl_ms)
}

/// Fits the coordinate network to `y` for `cfg.iters` Adam steps, then
/// applies [`dc_projection`]. `warm_start` replaces the seeded initialization.
pub fn reconstruct<T: Real>(
    cfg: &ExperimentConfig,
    y: &KtData<T>,
    mask: &SamplingMask,
    encoder: &Encoder<T>,
    kernel: Option<&SpiritKernel<T>>,
    warm_start: Option<MlpParams<T>>,
    opts: &TrainOptions,
) -> Result<Reconstruction<T>> {
    let weights = cfg.loss_weights()?;
    let mode = cfg.mode;
    if mode.uses_self_consistency() && kernel.is_none() {
        return Err(Error::MissingKernel(mode.tag().into()));
    }
    let mut params = match warm_start {
        Some(p) => {
            if p.arch != cfg.arch() {
                return Err(Error::Architecture {
                    layer: "checkpoint".into(),
                    reason: format!("warm-start architecture {:?} differs from config {:?}", p.arch, cfg.arch()),
                });
            }
            p
        }
        None => MlpParams::init(&cfg.arch(), cfg.sigma, cfg.stage_seed(Stage::Network), cfg.init_scheme())?,
    };
    let problem = Problem::new(encoder, y, mask, kernel, &cfg.tsl_ms, &params.embedding)?;
    let mut adam = AdamState::new(&params);
    let mut records = Vec::with_capacity(cfg.iters);
    // Parameters whose loss was last evaluated as finite.
    let mut last_good = params.clone();
    for iter in 0..cfg.iters {
        let step = total_loss(&params, &problem, weights, mode, cfg.dc_gradient);
        let (terms, grads) = match step {
            Ok(v) => v,
            Err(Error::NonFinite(_)) | Err(Error::DegeneratePrediction) => {
                return Err(diverged(iter, &last_good, opts));
            }
            Err(e) => return Err(e),
        };
        let lr = cfg.lr.at(iter);
        records.push(IterRecord {
            iter,
            lr,
            dc: terms.dc,
            hk: terms.hk,
            sc: terms.sc,
            total: terms.total,
        });
        last_good.clone_from(&params);
        if let Err(e) = adam_step(&mut adam, &mut params, &grads, lr) {
            return match e {
                Error::NonFinite(_) => Err(diverged(iter, &last_good, opts)),
                other => Err(other),
            };
        }
    }
    let final_loss = evaluate_loss(&params, &problem, weights, mode, cfg.dc_gradient)?;
    let prediction = problem.predict(&params)?;
    let image = dc_projection(&prediction, y, mask, encoder)?;
    Ok(Reconstruction {
        image,
        prediction,
        params,
        report: TrainReport {
            records,
            summary: ReportSummary {
                mode,
                iters: cfg.iters,
                seed: cfg.seed,
                weights,
                final_loss,
                metrics: None,
            },
        },
    })
}

/// Saves `params` (the last iterate with a finite loss) when a checkpoint
/// directory is configured.
fn diverged<T: Real>(iteration: usize, params: &MlpParams<T>, opts: &TrainOptions) -> Error {
    let checkpoint = match &opts.checkpoint_dir {
        Some(dir) => match save_params(dir, params) {
            Ok(()) => dir.display().to_string(),
            Err(e) => format!("<not saved: {e}>"),
        },
        None => "<no checkpoint directory configured>".into(),
    };
    Error::Diverged { iteration, checkpoint }
}
