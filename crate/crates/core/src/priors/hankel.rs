//! Per-voxel temporal Hankel matrices and the nuclear-norm penalty.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phantom::ImageSeries;
use crate::priors::linalg::{svd, CMat};
use crate::scalar::Real;

/// Relative singular-value cutoff for the subgradient.
pub const RANK_EPS: f64 = 1e-12;

/// Hankel geometry for a temporal signal of `n_tsl` samples: `rows × cols`
/// with `cols = ⌈n_tsl/2⌉` and `rows + cols - 1 = n_tsl`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HankelConfig {
    pub n_tsl: usize,
    pub rows: usize,
    pub cols: usize,
}

impl HankelConfig {
    pub fn new(n_tsl: usize) -> Result<Self> {
        if n_tsl == 0 {
            return Err(Error::Invalid("Hankel signal length must be positive".into()));
        }
        let cols = n_tsl.div_ceil(2);
        Ok(HankelConfig {
            n_tsl,
            rows: n_tsl - cols + 1,
            cols,
        })
    }
}

pub fn hankel_build<T: Real>(signal: &[Complex<T>], cfg: &HankelConfig) -> Result<CMat<T>> {
    if signal.len() != cfg.n_tsl {
        return Err(Error::Shape(format!(
            "signal length {} but Hankel config expects {}",
            signal.len(),
            cfg.n_tsl
        )));
    }
    Ok(CMat::from_fn(cfg.rows, cfg.cols, |i, j| signal[i + j]))
}

/// Anti-diagonal sums; the adjoint of [`hankel_build`].
pub fn hankel_adjoint<T: Real>(g: &CMat<T>, cfg: &HankelConfig) -> Result<Vec<Complex<T>>> {
    if g.rows != cfg.rows || g.cols != cfg.cols {
        return Err(Error::Shape(format!(
            "matrix is {}x{} but Hankel config expects {}x{}",
            g.rows, g.cols, cfg.rows, cfg.cols
        )));
    }
    let mut out = vec![Complex::new(T::zero(), T::zero()); cfg.n_tsl];
    for i in 0..g.rows {
        for j in 0..g.cols {
            out[i + j] += g.at(i, j);
        }
    }
    Ok(out)
}

/// Nuclear norm and the subgradient `U Vᴴ` over non-negligible singular values.
pub fn nuclear_norm_and_subgrad<T: Real>(h: &CMat<T>) -> Result<(T, CMat<T>)> {
    let d = svd(h)?;
    let smax = d.s.first().copied().unwrap_or_else(T::zero);
    let cut = T::of(RANK_EPS) * smax;
    let value: T = d.s.iter().copied().sum();
    let mut sub = CMat::zeros(h.rows, h.cols);
    for (k, &s) in d.s.iter().enumerate() {
        if !(s > cut) {
            continue;
        }
        for i in 0..h.rows {
            let u = d.u.at(i, k);
            for j in 0..h.cols {
                *sub.at_mut(i, j) += u * d.v.at(j, k).conj();
            }
        }
    }
    Ok((value, sub))
}

/// Mean per-voxel nuclear norm of the temporal Hankel matrices, and its
/// gradient with respect to the image series.
pub fn loss_hk<T: Real>(images: &ImageSeries<T>, cfg: &HankelConfig) -> Result<(T, ImageSeries<T>)> {
    if images.nt() != cfg.n_tsl {
        return Err(Error::Shape(format!(
            "image series has {} TSLs but Hankel config expects {}",
            images.nt(),
            cfg.n_tsl
        )));
    }
    let nv = images.nv();
    let per_voxel: Vec<(T, Vec<Complex<T>>)> = (0..nv)
        .into_par_iter()
        .map(|p| {
            let h = hankel_build(&images.voxel(p), cfg)?;
            let (v, sub) = nuclear_norm_and_subgrad(&h)?;
            Ok((v, hankel_adjoint(&sub, cfg)?))
        })
        .collect::<Result<_>>()?;
    let scale = T::one() / T::of(nv as f64);
    let mut grad = ImageSeries::zeros(images.nx, images.ny, images.tsl_ms.clone());
    let mut total = T::zero();
    for (p, (v, g)) in per_voxel.into_iter().enumerate() {
        total += v;
        for (t, z) in g.into_iter().enumerate() {
            grad.data[p + t * nv] = z * scale;
        }
    }
    Ok((total * scale, grad))
}
