//! Mono-exponential `M0·exp(-TSL/T1ρ)` fitting of magnitude series.

use rayon::prelude::*;

use crate::config::FitMethod;
use crate::error::{Error, Result};
use crate::phantom::ImageSeries;
use crate::scalar::Real;
use crate::tensor_io::Tensor;

pub const MAX_GN_ITERS: usize = 100;
pub const STEP_TOL: f64 = 1e-10;
pub const ADAM_ITERS: usize = 50_000;

/// Per-pixel fit status bits.
pub const FLAG_EXCLUDED: u8 = 1;
pub const FLAG_CLAMPED: u8 = 2;

/// Fitted maps, index `x + nx·y`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantMaps {
    pub nx: usize,
    pub ny: usize,
    pub m0: Vec<f64>,
    pub t1rho_ms: Vec<f64>,
    /// RMS of the fit residual.
    pub residual: Vec<f64>,
    /// Pixels that were fitted (inside the requested mask and not excluded).
    pub fit_mask: Vec<bool>,
    pub flags: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelFit {
    pub m0: f64,
    pub t1rho_ms: f64,
    pub residual: f64,
    pub flags: u8,
    /// Sum of squared residuals after initialization and after every
    /// accepted step.
    pub cost_history: Vec<f64>,
}

fn cost(m: &[f64], tsl: &[f64], m0: f64, t: f64) -> f64 {
    m.iter()
        .zip(tsl)
        .map(|(&mk, &tk)| {
            let r = m0 * (-tk / t).exp() - mk;
            r * r
        })
        .sum()
}

/// Log-linear regression of `ln m` against TSL over positive samples.
fn log_linear_init(m: &[f64], tsl: &[f64], bounds: [f64; 2]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = m
        .iter()
        .zip(tsl)
        .filter(|(&mk, _)| mk > 0.0)
        .map(|(&mk, &tk)| (tk, mk.ln()))
        .collect();
    if pts.len() < 2 {
        let peak = m.iter().cloned().fold(0.0, f64::max);
        return (peak, bounds[1]);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let t = if slope < 0.0 { -1.0 / slope } else { f64::INFINITY };
    let t = t.clamp(bounds[0], bounds[1]);
    let intercept = ml - slope * mt;
    (intercept.exp(), t)
}

/// Best `M0` for fixed `T`: linear least squares.
fn best_m0(m: &[f64], tsl: &[f64], t: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&mk, &tk) in m.iter().zip(tsl) {
        let e = (-tk / t).exp();
        num += e * mk;
        den += e * e;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Damped Gauss–Newton fit of one pixel.
pub fn fit_pixel(m: &[f64], tsl: &[f64], bounds: [f64; 2]) -> PixelFit {
    if m.iter().all(|&v| v == 0.0) {
        return PixelFit {
            m0: 0.0,
            t1rho_ms: 0.0,
            residual: 0.0,
            flags: FLAG_EXCLUDED,
            cost_history: vec![0.0],
        };
    }
    let (mut m0, mut t) = log_linear_init(m, tsl, bounds);
    if !m0.is_finite() {
        m0 = best_m0(m, tsl, t);
    }
    let mut c = cost(m, tsl, m0, t);
    let mut history = vec![c];
    for _ in 0..MAX_GN_ITERS {
        // Normal equations of the 2-parameter linearization.
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&mk, &tk) in m.iter().zip(tsl) {
            let e = (-tk / t).exp();
            let r = m0 * e - mk;
            let j1 = e;
            let j2 = m0 * e * tk / (t * t);
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            b1 += j1 * r;
            b2 += j2 * r;
        }
        let det = a11 * a22 - a12 * a12;
        let (d1, d2) = if det > 0.0 {
            (-(a22 * b1 - a12 * b2) / det, -(a11 * b2 - a12 * b1) / det)
        } else if a11 > 0.0 {
            (-b1 / a11, 0.0)
        } else {
            break;
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let nm0 = m0 + step * d1;
            let nt = (t + step * d2).clamp(bounds[0], bounds[1]);
            let nc = cost(m, tsl, nm0, nt);
            if nc <= c {
                accepted = Some((nm0, nt, nc));
                break;
            }
            step *= 0.5;
        }
        let Some((nm0, nt, nc)) = accepted else { break };
        let rel = ((nm0 - m0).abs() / m0.abs().max(f64::MIN_POSITIVE)).max((nt - t).abs() / t);
        m0 = nm0;
        t = nt;
        c = nc;
        history.push(c);
        if rel < STEP_TOL {
            break;
        }
    }
    finish(m, tsl, bounds, m0, t, history)
}

fn finish(m: &[f64], tsl: &[f64], bounds: [f64; 2], m0: f64, t: f64, history: Vec<f64>) -> PixelFit {
    let c = cost(m, tsl, m0, t);
    let flags = if t <= bounds[0] || t >= bounds[1] { FLAG_CLAMPED } else { 0 };
    PixelFit {
        m0,
        t1rho_ms: t,
        residual: (c / m.len() as f64).sqrt(),
        flags,
        cost_history: history,
    }
}

/// First-order fit with Adam on `(M0, ln T1ρ)`, started from the log-linear
/// estimate.
pub fn fit_pixel_adam(m: &[f64], tsl: &[f64], bounds: [f64; 2], iters: usize) -> PixelFit {
    if m.iter().all(|&v| v == 0.0) {
        return fit_pixel(m, tsl, bounds);
    }
    let (m0, t) = log_linear_init(m, tsl, bounds);
    let mut p = [if m0.is_finite() { m0 } else { best_m0(m, tsl, t) }, t.ln()];
    let scale = m.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut adam = crate::trainer::AdamState::<f64>::with_lengths(&[2]);
    let (lo, hi) = (bounds[0].ln(), bounds[1].ln());
    let mut history = vec![cost(m, tsl, p[0], t)];
    for _ in 0..iters {
        let t = p[1].exp();
        let (mut g0, mut g1) = (0.0, 0.0);
        for (&mk, &tk) in m.iter().zip(tsl) {
            let e = (-tk / t).exp();
            let r = p[0] * e - mk;
            g0 += 2.0 * r * e / scale;
            g1 += 2.0 * r * p[0] * e * tk / t / scale;
        }
        if adam.update(&mut [&mut p[..]], &[&[g0, g1]], 1e-3).is_err() {
            break;
        }
        p[1] = p[1].clamp(lo, hi);
    }
    history.push(cost(m, tsl, p[0], p[1].exp()));
    finish(m, tsl, bounds, p[0], p[1].exp(), history)
}

/// Fits every pixel of a magnitude series (`mag[x + nx·(y + ny·t)]`) inside
/// `mask` (all pixels when `None`).
#[allow(clippy::too_many_arguments)]
pub fn fit_t1rho(
    mag: &[f64],
    nx: usize,
    ny: usize,
    tsl_ms: &[f64],
    mask: Option<&[bool]>,
    bounds: [f64; 2],
    method: FitMethod,
) -> Result<QuantMaps> {
    let nt = tsl_ms.len();
    let nv = nx * ny;
    if nt < 2 {
        return Err(Error::Invalid(format!("fitting needs at least 2 TSLs, got {nt}")));
    }
    if mag.len() != nv * nt {
        return Err(Error::Shape(format!("{} magnitudes for {nx}x{ny}x{nt}", mag.len())));
    }
    if let Some(i) = mag.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Invalid(format!("magnitude at index {i} is negative or non-finite")));
    }
    if !(bounds[0] > 0.0 && bounds[1] > bounds[0]) {
        return Err(Error::config("t1rho_bounds", format!("need 0 < min < max, got {bounds:?}")));
    }
    if let Some(m) = mask {
        if m.len() != nv {
            return Err(Error::Shape(format!("mask has {} pixels, image has {nv}", m.len())));
        }
    }
    let fits: Vec<Option<PixelFit>> = (0..nv)
        .into_par_iter()
        .map(|p| {
            if mask.is_some_and(|m| !m[p]) {
                return None;
            }
            let sig: Vec<f64> = (0..nt).map(|t| mag[p + t * nv]).collect();
            Some(match method {
                FitMethod::GaussNewton => fit_pixel(&sig, tsl_ms, bounds),
                FitMethod::Adam => fit_pixel_adam(&sig, tsl_ms, bounds, ADAM_ITERS),
            })
        })
        .collect();
    let mut q = QuantMaps {
        nx,
        ny,
        m0: vec![0.0; nv],
        t1rho_ms: vec![0.0; nv],
        residual: vec![0.0; nv],
        fit_mask: vec![false; nv],
        flags: vec![0; nv],
    };
    for (p, f) in fits.into_iter().enumerate() {
        if let Some(f) = f {
            q.flags[p] = f.flags;
            if f.flags & FLAG_EXCLUDED == 0 {
                q.m0[p] = f.m0;
                q.t1rho_ms[p] = f.t1rho_ms;
                q.residual[p] = f.residual;
                q.fit_mask[p] = true;
            }
        }
    }
    Ok(q)
}

/// Magnitude fit of an image series.
pub fn fit_series<T: Real>(
    images: &ImageSeries<T>,
    mask: Option<&[bool]>,
    bounds: [f64; 2],
    method: FitMethod,
) -> Result<QuantMaps> {
    fit_t1rho(&images.magnitude(), images.nx, images.ny, &images.tsl_ms, mask, bounds, method)
}

impl QuantMaps {
    fn map_tensor(&self, v: &[f64]) -> Result<Tensor> {
        let data = crate::tensor_io::first_fastest_to_row_major(
            &v.iter().map(|&x| x as f32).collect::<Vec<_>>(),
            &[self.nx, self.ny],
        );
        Tensor::real(vec![self.nx, self.ny], data)
    }

    /// `(m0, t1rho, residual, flags)` as `[N_x, N_y]` real tensors; flags
    /// hold `0` for unfitted pixels outside the mask and `1 + bits` otherwise.
    pub fn to_tensors(&self) -> Result<[Tensor; 4]> {
        let flags: Vec<f64> = self
            .flags
            .iter()
            .zip(&self.fit_mask)
            .map(|(&f, &m)| if m || f != 0 { 1.0 + f as f64 } else { 0.0 })
            .collect();
        Ok([
            self.map_tensor(&self.m0)?,
            self.map_tensor(&self.t1rho_ms)?,
            self.map_tensor(&self.residual)?,
            self.map_tensor(&flags)?,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: [f64; 2] = [1.0, 500.0];

    #[test]
    fn exact_recovery() {
        let tsl = [1.0, 20.0, 40.0, 60.0, 80.0];
        for (m0, t) in [(1.0f64, 50.0f64), (0.3, 12.0), (2.5, 300.0)] {
            let m: Vec<f64> = tsl.iter().map(|&k| m0 * (-k / t).exp()).collect();
            let f = fit_pixel(&m, &tsl, B);
            assert!((f.m0 - m0).abs() / m0 < 1e-6);
            assert!((f.t1rho_ms - t).abs() / t < 1e-6);
            assert_eq!(f.flags, 0);
        }
    }

    #[test]
    fn two_point_closed_form() {
        let f = fit_pixel(&[1.0, (-0.5f64).exp()], &[20.0, 40.0], B);
        assert!((f.t1rho_ms - 40.0).abs() < 1e-12, "{}", f.t1rho_ms);
    }

    #[test]
    fn constant_signal_clamps() {
        let f = fit_pixel(&[0.7; 5], &[1.0, 20.0, 40.0, 60.0, 80.0], B);
        assert_eq!(f.t1rho_ms, 500.0);
        assert_eq!(f.flags, FLAG_CLAMPED);
    }

    #[test]
    fn zero_pixel_excluded() {
        let q = fit_t1rho(&[0.0; 4], 2, 1, &[10.0, 20.0], None, B, FitMethod::GaussNewton).unwrap();
        assert!(q.fit_mask.iter().all(|&m| !m));
        assert!(q.flags.iter().all(|&f| f == FLAG_EXCLUDED));
    }

    #[test]
    fn noisy_fit_cost_is_monotone() {
        let tsl = [1.0, 20.0, 40.0, 60.0, 80.0];
        let m = [1.02, 0.63, 0.46, 0.27, 0.21];
        let f = fit_pixel(&m, &tsl, B);
        assert!(f.cost_history.windows(2).all(|w| w[1] <= w[0]));
        let init = log_linear_init(&m, &tsl, B);
        assert!(f.cost_history.last().unwrap() <= &cost(&m, &tsl, init.0, init.1));
    }

    #[test]
    fn adam_agrees_with_gauss_newton() {
        let tsl = [1.0, 20.0, 40.0, 60.0, 80.0];
        let m = [1.02, 0.63, 0.46, 0.27, 0.21];
        let a = fit_pixel_adam(&m, &tsl, B, 20_000);
        let g = fit_pixel(&m, &tsl, B);
        assert!((a.t1rho_ms - g.t1rho_ms).abs() / g.t1rho_ms < 1e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fit_t1rho(&[1.0; 2], 2, 1, &[10.0], None, B, FitMethod::GaussNewton).is_err());
        assert!(fit_t1rho(&[-1.0, 1.0], 1, 1, &[10.0, 20.0], None, B, FitMethod::GaussNewton).is_err());
    }
}
