use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::config::{DcGradient, Mode};
use crate::encoding::{apply_mask, Encoder, KtData};
use crate::error::{Error, Result};
use crate::inr::{to_complex, CoordGrid, FourierEmbedding, MlpParams};
use crate::phantom::ImageSeries;
use crate::priors::hankel::{loss_hk, HankelConfig};
use crate::priors::spirit::SpiritKernel;
use crate::sampling::SamplingMask;
use crate::scalar::{l1_abs, sign0, Real};

/// Prior weights: `λ1` on the Hankel term, `λ2` on self-consistency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(LossWeights { lambda1, lambda2 })
    }
}

/// Values of every loss term at one iterate. Terms not active in the mode
/// are reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dc: f64,
    pub dc_numerator: f64,
    pub dc_denominator: f64,
    pub hk: f64,
    pub sc: f64,
    pub total: f64,
}

/// Everything the loss needs besides the network: measured data, operators
/// and the embedded coordinate grid.
pub struct Problem<'a, T: Real> {
    pub encoder: &'a Encoder<T>,
    /// Acquired k-space, zero where not sampled.
    pub y: KtData<T>,
    pub mask: &'a SamplingMask,
    pub kernel: Option<&'a SpiritKernel<T>>,
    pub hankel: HankelConfig,
    pub tsl_ms: Vec<f64>,
    /// Embedded coordinates, one row per voxel and TSL.
    pub emb: Array2<T>,
}

impl<'a, T: Real> Problem<'a, T> {
    pub fn new(
        encoder: &'a Encoder<T>,
        y: &KtData<T>,
        mask: &'a SamplingMask,
        kernel: Option<&'a SpiritKernel<T>>,
        tsl_ms: &[f64],
        embedding: &FourierEmbedding<T>,
    ) -> Result<Self> {
        let coils = encoder.coils();
        if y.nx != coils.nx || y.ny != coils.ny || y.nc != coils.nc || y.nt != tsl_ms.len() {
            return Err(Error::Shape(format!(
                "k-space {}x{}x{}x{} does not match coils {}x{}x{} and {} TSLs",
                y.nx,
                y.ny,
                y.nc,
                y.nt,
                coils.nx,
                coils.ny,
                coils.nc,
                tsl_ms.len()
            )));
        }
        if let Some(k) = kernel {
            if k.nc != y.nc || k.nt != y.nt {
                return Err(Error::Shape(format!(
                    "kernel is for {} coils x {} TSLs, data has {} x {}",
                    k.nc, k.nt, y.nc, y.nt
                )));
            }
        }
        let grid = CoordGrid::<T>::new(y.nx, y.ny, tsl_ms);
        Ok(Problem {
            encoder,
            y: apply_mask(y, mask)?,
            mask,
            kernel,
            hankel: HankelConfig::new(tsl_ms.len())?,
            tsl_ms: tsl_ms.to_vec(),
            emb: embedding.embed_batch(grid.coords.view()),
        })
    }

    /// Network output reshaped as an image series.
    pub fn image_from_output(&self, out: &Array2<T>) -> ImageSeries<T> {
        ImageSeries {
            nx: self.y.nx,
            ny: self.y.ny,
            tsl_ms: self.tsl_ms.clone(),
            data: to_complex(out),
        }
    }

    pub fn predict(&self, params: &MlpParams<T>) -> Result<ImageSeries<T>> {
        Ok(self.image_from_output(&params.forward(self.emb.view())?))
    }
}

/// Normalized separable L1 data term `‖pred - y‖₁ / ‖pred‖₁` over sampled
/// entries (both inputs zero elsewhere), with its gradient.
///
/// With [`DcGradient::Frozen`] the denominator is treated as a constant of
/// the current iterate; [`DcGradient::Quotient`] differentiates it as well.
pub fn loss_dc<T: Real>(
    pred: &KtData<T>,
    y: &KtData<T>,
    grad_mode: DcGradient,
) -> Result<(LossBreakdown, KtData<T>)> {
    if !pred.same_shape(y) {
        return Err(Error::Shape("prediction and data differ in shape".into()));
    }
    let num: T = pred.data.iter().zip(&y.data).map(|(&p, &q)| l1_abs(p - q)).sum();
    let den: T = pred.data.iter().map(|&p| l1_abs(p)).sum();
    if !(den > T::zero()) {
        return Err(Error::DegeneratePrediction);
    }
    let mut g = KtData::zeros(pred.nx, pred.ny, pred.nc, pred.nt);
    let inv = T::one() / den;
    let q = num / (den * den);
    for ((gi, &p), &yi) in g.data.iter_mut().zip(&pred.data).zip(&y.data) {
        let r = p - yi;
        let mut v = Complex::new(sign0(r.re) * inv, sign0(r.im) * inv);
        if grad_mode == DcGradient::Quotient {
            v -= Complex::new(sign0(p.re) * q, sign0(p.im) * q);
        }
        *gi = v;
    }
    let terms = LossBreakdown {
        dc: (num / den).as_f64(),
        dc_numerator: num.as_f64(),
        dc_denominator: den.as_f64(),
        ..Default::default()
    };
    Ok((terms, g))
}

/// Total loss of an image-space iterate for `mode`, and optionally its
/// gradient with respect to the image.
pub fn image_loss<T: Real>(
    x: &ImageSeries<T>,
    problem: &Problem<'_, T>,
    weights: LossWeights,
    mode: Mode,
    grad_mode: DcGradient,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<ImageSeries<T>>)> {
    let kernel = if mode.uses_self_consistency() {
        Some(problem.kernel.ok_or_else(|| Error::MissingKernel(mode.tag().into()))?)
    } else {
        None
    };
    let enc = problem.encoder;
    let kt_full = enc.forward_full(x)?;
    let pred = apply_mask(&kt_full, problem.mask)?;
    let (mut terms, mut g_kt) = loss_dc(&pred, &problem.y, grad_mode)?;
    let mut total = T::of(terms.dc);

    if let Some(k) = kernel {
        let (v, g) = k.loss_sc(&kt_full)?;
        terms.sc = v.as_f64();
        let l2 = T::of(weights.lambda2);
        total += l2 * v;
        g_kt.data.iter_mut().zip(&g.data).for_each(|(a, &b)| *a += b * l2);
    }
    let mut g_img = if want_grad {
        Some(enc.adjoint_full_with_tsl(&g_kt, &x.tsl_ms)?)
    } else {
        None
    };
    if mode.uses_hankel() {
        let (v, g) = loss_hk(x, &problem.hankel)?;
        terms.hk = v.as_f64();
        let l1 = T::of(weights.lambda1);
        total += l1 * v;
        if let Some(gi) = g_img.as_mut() {
            gi.data.iter_mut().zip(&g.data).for_each(|(a, &b)| *a += b * l1);
        }
    }
    terms.total = total.as_f64();
    if !terms.total.is_finite() {
        return Err(Error::NonFinite("total loss".into()));
    }
    Ok((terms, g_img))
}

fn image_grad_to_upstream<T: Real>(g: &ImageSeries<T>) -> Array2<T> {
    let mut up = Array2::zeros((g.data.len(), 2));
    for (mut row, z) in up.rows_mut().into_iter().zip(&g.data) {
        row[0] = z.re;
        row[1] = z.im;
    }
    up
}

/// Loss of the network on `problem` and its gradient for every trainable
/// parameter.
pub fn total_loss<T: Real>(
    params: &MlpParams<T>,
    problem: &Problem<'_, T>,
    weights: LossWeights,
    mode: Mode,
    grad_mode: DcGradient,
) -> Result<(LossBreakdown, MlpParams<T>)> {
    let emb: ArrayView2<T> = problem.emb.view();
    let (out, cache) = params.forward_train(emb)?;
    let x = problem.image_from_output(&out);
    let (terms, g_img) = image_loss(&x, problem, weights, mode, grad_mode, true)?;
    let upstream = image_grad_to_upstream(&g_img.expect("gradient requested"));
    let grads = params.backward(emb, &cache, upstream.view())?;
    Ok((terms, grads))
}

/// Loss value only.
pub fn evaluate_loss<T: Real>(
    params: &MlpParams<T>,
    problem: &Problem<'_, T>,
    weights: LossWeights,
    mode: Mode,
    grad_mode: DcGradient,
) -> Result<LossBreakdown> {
    let x = problem.predict(params)?;
    Ok(image_loss(&x, problem, weights, mode, grad_mode, false)?.0)
}
