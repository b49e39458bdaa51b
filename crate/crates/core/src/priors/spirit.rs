//! k-t self-consistency kernel: calibration from ACS data, application as a
//! zero-padded convolution, its adjoint, and the resulting penalty.

use std::path::Path;

use num_complex::{Complex, Complex32};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KernelSpec;
use crate::encoding::KtData;
use crate::error::{Error, Result};
use crate::priors::linalg::{cholesky_solve, CMat};
use crate::scalar::{cast_complex, Real};
use crate::tensor_io::{read_tensor, write_atomic, write_tensor, Tensor};

/// Convolution weights for every target `(coil, TSL)`.
///
/// Weights are stored per target (index `t·nc + c`) as `[dt][source coil][qy][qx]`
/// with `qx` fastest; `dt` runs over `-(wt/2)..=wt/2`. Taps whose TSL falls
/// outside the series are zero, as is each target's own centre tap.
#[derive(Clone, Debug, PartialEq)]
pub struct SpiritKernel<T> {
    pub spec: KernelSpec,
    pub nc: usize,
    pub nt: usize,
    pub weights: Vec<Complex<T>>,
}

/// JSON sidecar describing a stored kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub wx: usize,
    pub wy: usize,
    pub wt: usize,
    pub tau: f64,
    pub nc: usize,
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub acs: usize,
    pub layout: String,
}

const LAYOUT: &str = "[target = t*nc + c][dt*nc + source coil][qy][qx]";

fn validate_spec(spec: &KernelSpec) -> Result<()> {
    for (name, w) in [("kernel.wx", spec.wx), ("kernel.wy", spec.wy), ("kernel.wt", spec.wt)] {
        if w == 0 || w % 2 == 0 {
            return Err(Error::Config {
                field: name.into(),
                reason: format!("window size must be odd and positive, got {w}"),
            });
        }
    }
    if !(spec.tau >= 0.0) || !spec.tau.is_finite() {
        return Err(Error::Config {
            field: "kernel.tau".into(),
            reason: "must be finite and non-negative".into(),
        });
    }
    Ok(())
}

impl<T: Real> SpiritKernel<T> {
    pub fn zeros(spec: KernelSpec, nc: usize, nt: usize) -> Result<Self> {
        validate_spec(&spec)?;
        let n = nc * nt * spec.wt * nc * spec.wy * spec.wx;
        Ok(SpiritKernel {
            spec,
            nc,
            nt,
            weights: vec![Complex::new(T::zero(), T::zero()); n],
        })
    }

    /// Number of weights per target.
    pub fn taps(&self) -> usize {
        self.spec.wt * self.nc * self.spec.wy * self.spec.wx
    }

    #[inline]
    pub fn tap_index(&self, dt_idx: usize, src: usize, qy: usize, qx: usize) -> usize {
        ((dt_idx * self.nc + src) * self.spec.wy + qy) * self.spec.wx + qx
    }

    pub fn target(&self, c: usize, t: usize) -> &[Complex<T>] {
        let n = self.taps();
        let k = t * self.nc + c;
        &self.weights[k * n..(k + 1) * n]
    }

    pub fn target_mut(&mut self, c: usize, t: usize) -> &mut [Complex<T>] {
        let n = self.taps();
        let k = t * self.nc + c;
        &mut self.weights[k * n..(k + 1) * n]
    }

    /// Index of the target's own centre tap.
    pub fn self_tap(&self, c: usize) -> usize {
        self.tap_index(self.spec.wt / 2, c, self.spec.wy / 2, self.spec.wx / 2)
    }

    /// Zeroes taps that are structurally excluded: the self tap and taps
    /// reaching outside the TSL range.
    pub fn enforce_constraints(&mut self) {
        let ht = self.spec.wt / 2;
        let nt = self.nt;
        for t in 0..nt {
            for c in 0..self.nc {
                let st = self.self_tap(c);
                let per_dt = self.nc * self.spec.wy * self.spec.wx;
                let w = self.target_mut(c, t);
                w[st] = Complex::new(T::zero(), T::zero());
                for dt_idx in 0..2 * ht + 1 {
                    let s = t as isize + dt_idx as isize - ht as isize;
                    if s < 0 || s >= nt as isize {
                        w[dt_idx * per_dt..(dt_idx + 1) * per_dt]
                            .iter_mut()
                            .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                    }
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn cast<U: Real>(&self) -> SpiritKernel<U> {
        SpiritKernel {
            spec: self.spec,
            nc: self.nc,
            nt: self.nt,
            weights: self.weights.iter().map(|&z| cast_complex(z)).collect(),
        }
    }

    fn check_geometry(&self, kt: &KtData<T>) -> Result<()> {
        if kt.nc != self.nc || kt.nt != self.nt {
            return Err(Error::Shape(format!(
                "kernel is for {} coils x {} TSLs but data has {} x {}",
                self.nc, self.nt, kt.nc, kt.nt
            )));
        }
        Ok(())
    }

    /// `𝒢 kt`: each output point is the weighted sum of its k-t neighbourhood,
    /// zero-padded at the spatial borders.
    pub fn apply(&self, kt: &KtData<T>) -> Result<KtData<T>> {
        self.check_geometry(kt)?;
        let (nx, ny, nc, nt) = (kt.nx, kt.ny, kt.nc, kt.nt);
        let (wx, wy, ht) = (self.spec.wx, self.spec.wy, self.spec.wt / 2);
        let (hx, hy) = (wx as isize / 2, wy as isize / 2);
        let slices: Vec<Vec<Complex<T>>> = (0..nc * nt)
            .into_par_iter()
            .map(|k| {
                let (c, t) = (k % nc, k / nc);
                let w = self.target(c, t);
                let mut out = vec![Complex::new(T::zero(), T::zero()); nx * ny];
                for dt_idx in 0..2 * ht + 1 {
                    let s = t as isize + dt_idx as isize - ht as isize;
                    if s < 0 || s >= nt as isize {
                        continue;
                    }
                    for src in 0..nc {
                        let data = kt.slice(src, s as usize);
                        for qy in 0..wy {
                            let oy = qy as isize - hy;
                            for qx in 0..wx {
                                let wt = w[self.tap_index(dt_idx, src, qy, qx)];
                                if wt.re == T::zero() && wt.im == T::zero() {
                                    continue;
                                }
                                let ox = qx as isize - hx;
                                let (x0, x1) = valid_range(nx, ox);
                                for y in valid_range_iter(ny, oy) {
                                    let sy = (y as isize + oy) as usize;
                                    let dst = &mut out[y * nx + x0..y * nx + x1];
                                    let from = (x0 as isize + ox) as usize;
                                    let srow = &data[sy * nx + from..sy * nx + from + (x1 - x0)];
                                    for (o, &v) in dst.iter_mut().zip(srow) {
                                        *o += wt * v;
                                    }
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let mut out = KtData::zeros(nx, ny, nc, nt);
        for (k, s) in slices.into_iter().enumerate() {
            out.slice_mut(k % nc, k / nc).copy_from_slice(&s);
        }
        Ok(out)
    }

    /// `𝒢* z`, the correlation form with conjugated weights.
    pub fn apply_adjoint(&self, z: &KtData<T>) -> Result<KtData<T>> {
        self.check_geometry(z)?;
        let (nx, ny, nc, nt) = (z.nx, z.ny, z.nc, z.nt);
        let (wx, wy, ht) = (self.spec.wx, self.spec.wy, self.spec.wt / 2);
        let (hx, hy) = (wx as isize / 2, wy as isize / 2);
        // Gather per output slice so the parallel map has no write conflicts.
        let slices: Vec<Vec<Complex<T>>> = (0..nc * nt)
            .into_par_iter()
            .map(|k| {
                let (src, s) = (k % nc, k / nc);
                let mut out = vec![Complex::new(T::zero(), T::zero()); nx * ny];
                for dt_idx in 0..2 * ht + 1 {
                    // Targets at TSL t read source TSL s = t + dt.
                    let t = s as isize - (dt_idx as isize - ht as isize);
                    if t < 0 || t >= nt as isize {
                        continue;
                    }
                    let t = t as usize;
                    for c in 0..nc {
                        let w = self.target(c, t);
                        let zin = z.slice(c, t);
                        for qy in 0..wy {
                            let oy = qy as isize - hy;
                            for qx in 0..wx {
                                let wt = w[self.tap_index(dt_idx, src, qy, qx)].conj();
                                if wt.re == T::zero() && wt.im == T::zero() {
                                    continue;
                                }
                                let ox = qx as isize - hx;
                                // out(p + o) += conj(w) z(p), i.e. out(u) += conj(w) z(u - o).
                                let (x0, x1) = valid_range(nx, -ox);
                                for y in valid_range_iter(ny, -oy) {
                                    let sy = (y as isize - oy) as usize;
                                    let dst = &mut out[y * nx + x0..y * nx + x1];
                                    let from = (x0 as isize - ox) as usize;
                                    let srow = &zin[sy * nx + from..sy * nx + from + (x1 - x0)];
                                    for (o, &v) in dst.iter_mut().zip(srow) {
                                        *o += wt * v;
                                    }
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let mut out = KtData::zeros(nx, ny, nc, nt);
        for (k, s) in slices.into_iter().enumerate() {
            out.slice_mut(k % nc, k / nc).copy_from_slice(&s);
        }
        Ok(out)
    }

    /// `(𝒢 - I) kt`.
    pub fn residual(&self, kt: &KtData<T>) -> Result<KtData<T>> {
        let mut r = self.apply(kt)?;
        r.data.iter_mut().zip(&kt.data).for_each(|(a, b)| *a -= b);
        Ok(r)
    }

    /// `(𝒢 - I)* z`.
    pub fn residual_adjoint(&self, z: &KtData<T>) -> Result<KtData<T>> {
        let mut r = self.apply_adjoint(z)?;
        r.data.iter_mut().zip(&z.data).for_each(|(a, b)| *a -= b);
        Ok(r)
    }

    /// `‖(𝒢 - I) kt‖² / N` and its gradient `(2/N) (𝒢 - I)* (𝒢 - I) kt`.
    pub fn loss_sc(&self, kt: &KtData<T>) -> Result<(T, KtData<T>)> {
        let r = self.residual(kt)?;
        let n = T::of(kt.len() as f64);
        let value = r.data.iter().map(|z| z.norm_sqr()).sum::<T>() / n;
        let mut g = self.residual_adjoint(&r)?;
        let scale = T::of(2.0) / n;
        g.data.iter_mut().for_each(|z| *z = *z * scale);
        Ok((value, g))
    }

    /// Relative residual `‖(𝒢 - I) kt‖ / ‖kt‖` over points whose full spatial
    /// window lies inside the data.
    pub fn interior_residual(&self, kt: &KtData<T>) -> Result<T> {
        let r = self.residual(kt)?;
        let (hx, hy) = (self.spec.wx / 2, self.spec.wy / 2);
        let (mut num, mut den) = (T::zero(), T::zero());
        for t in 0..kt.nt {
            for c in 0..kt.nc {
                for y in hy..kt.ny.saturating_sub(hy) {
                    for x in hx..kt.nx.saturating_sub(hx) {
                        let i = kt.index(x, y, c, t);
                        num += r.data[i].norm_sqr();
                        den += kt.data[i].norm_sqr();
                    }
                }
            }
        }
        if den == T::zero() {
            return Ok(T::zero());
        }
        Ok((num / den).sqrt())
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        let data: Vec<Complex32> = self
            .weights
            .iter()
            .map(|&z| Complex32::new(z.re.as_f64() as f32, z.im.as_f64() as f32))
            .collect();
        Tensor::complex(
            vec![self.nc * self.nt, self.spec.wt * self.nc, self.spec.wy, self.spec.wx],
            data,
        )
    }

    pub fn meta(&self, nx: usize, ny: usize, acs: usize) -> KernelMeta {
        KernelMeta {
            wx: self.spec.wx,
            wy: self.spec.wy,
            wt: self.spec.wt,
            tau: self.spec.tau,
            nc: self.nc,
            nt: self.nt,
            nx,
            ny,
            acs,
            layout: LAYOUT.into(),
        }
    }

    pub fn from_tensor(t: &Tensor, meta: &KernelMeta) -> Result<Self> {
        let spec = KernelSpec {
            wx: meta.wx,
            wy: meta.wy,
            wt: meta.wt,
            tau: meta.tau,
        };
        validate_spec(&spec)?;
        t.expect_dims(&[meta.nc * meta.nt, meta.wt * meta.nc, meta.wy, meta.wx])?;
        let mut k = SpiritKernel {
            spec,
            nc: meta.nc,
            nt: meta.nt,
            weights: t
                .as_complex()?
                .iter()
                .map(|z| Complex::new(T::of(z.re as f64), T::of(z.im as f64)))
                .collect(),
        };
        if !k.is_finite() {
            return Err(Error::NonFinite("kernel weights".into()));
        }
        k.enforce_constraints();
        Ok(k)
    }

    /// Writes `<stem>.qkt` and `<stem>.json`.
    pub fn save(&self, qkt: &Path, json: &Path, nx: usize, ny: usize, acs: usize) -> Result<()> {
        write_tensor(qkt, &self.to_tensor()?)?;
        let meta = serde_json::to_string_pretty(&self.meta(nx, ny, acs))?;
        write_atomic(json, meta.as_bytes())
    }

    pub fn load(qkt: &Path, json: &Path) -> Result<(Self, KernelMeta)> {
        let text = std::fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
        let meta: KernelMeta = serde_json::from_str(&text)?;
        let k = Self::from_tensor(&read_tensor(qkt)?, &meta)?;
        Ok((k, meta))
    }
}

/// Output positions `[lo, hi)` along an axis of length `n` whose source
/// `i + off` is in range.
fn valid_range(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

fn valid_range_iter(n: usize, off: isize) -> std::ops::Range<usize> {
    let (a, b) = valid_range(n, off);
    a..b
}

/// Available temporal offsets (as window indices) for target TSL `t`.
fn available_dt(t: usize, nt: usize, wt: usize) -> Vec<usize> {
    let ht = wt / 2;
    (0..wt)
        .filter(|&d| {
            let s = t as isize + d as isize - ht as isize;
            s >= 0 && s < nt as isize
        })
        .collect()
}

/// Number of calibration equations contributed by one TSL of an ACS block.
fn rows_per_tsl(nx: usize, acs_rows: usize, spec: &KernelSpec) -> usize {
    (nx + 1).saturating_sub(spec.wx) * (acs_rows + 1).saturating_sub(spec.wy)
}

/// Extracts the fully sampled ACS rows `[start, start + acs)` from `kt`.
pub fn extract_acs<T: Real>(kt: &KtData<T>, start: usize, acs: usize) -> Result<KtData<T>> {
    if start + acs > kt.ny {
        return Err(Error::Shape(format!(
            "ACS rows {start}..{} exceed N_y = {}",
            start + acs,
            kt.ny
        )));
    }
    let mut out = KtData::zeros(kt.nx, acs, kt.nc, kt.nt);
    for t in 0..kt.nt {
        for c in 0..kt.nc {
            let src = kt.slice(c, t);
            out.slice_mut(c, t)
                .copy_from_slice(&src[start * kt.nx..(start + acs) * kt.nx]);
        }
    }
    Ok(out)
}

/// Least-squares calibration of the self-consistency kernel from a fully
/// sampled ACS block (`acs.ny` = number of ACS lines).
///
/// TSLs sharing the same set of available temporal offsets are pooled into
/// one system, so each such group shares weights. For each target coil the
/// centre tap is removed and a ridge term `τ·trace(AᴴA)/rows` is added.
pub fn calibrate_spirit<T: Real>(acs: &KtData<T>, spec: &KernelSpec) -> Result<SpiritKernel<T>> {
    validate_spec(spec)?;
    if acs.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if !acs.is_finite() {
        return Err(Error::NonFinite("ACS data".into()));
    }
    let (nx, ny, nc, nt) = (acs.nx, acs.ny, acs.nc, acs.nt);
    let mut kernel = SpiritKernel::<T>::zeros(*spec, nc, nt)?;

    // Group TSLs by available offset pattern.
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for t in 0..nt {
        let dts = available_dt(t, nt, spec.wt);
        match groups.iter_mut().find(|(d, _)| *d == dts) {
            Some((_, ts)) => ts.push(t),
            None => groups.push((dts, vec![t])),
        }
    }

    let per_tsl = rows_per_tsl(nx, ny, spec);
    for (dts, ts) in &groups {
        let ncols = dts.len() * nc * spec.wy * spec.wx;
        let unknowns = ncols - 1;
        let rows = per_tsl * ts.len();
        if rows < unknowns {
            return Err(Error::Underdetermined {
                rows,
                unknowns,
                acs: ny,
                required_acs: required_acs(nx, spec, ts.len(), unknowns),
            });
        }
        let gram = pooled_gram(acs, spec, dts, ts);
        let centre_dt = dts.iter().position(|&d| d == spec.wt / 2).expect("dt = 0 is always available");
        let per_dt = nc * spec.wy * spec.wx;
        let solutions: Vec<Vec<Complex<T>>> = (0..nc)
            .into_par_iter()
            .map(|c| {
                let j = centre_dt * per_dt + (c * spec.wy + spec.wy / 2) * spec.wx + spec.wx / 2;
                solve_target(&gram, j, rows, spec.tau)
            })
            .collect::<Result<_>>()?;
        for (c, g) in solutions.into_iter().enumerate() {
            for &t in ts {
                let w = kernel.target_mut(c, t);
                for (k, &d) in dts.iter().enumerate() {
                    w[d * per_dt..(d + 1) * per_dt].copy_from_slice(&g[k * per_dt..(k + 1) * per_dt]);
                }
            }
        }
    }
    kernel.enforce_constraints();
    if !kernel.is_finite() {
        return Err(Error::NonFinite("calibrated kernel".into()));
    }
    Ok(kernel)
}

fn required_acs(nx: usize, spec: &KernelSpec, tsls: usize, unknowns: usize) -> usize {
    let per_line = (nx + 1).saturating_sub(spec.wx) * tsls;
    if per_line == 0 {
        return usize::MAX;
    }
    spec.wy - 1 + unknowns.div_ceil(per_line)
}

/// `AᴴA` over every window position of every TSL in `ts`; columns ordered as
/// `[available dt][coil][qy][qx]`.
fn pooled_gram<T: Real>(acs: &KtData<T>, spec: &KernelSpec, dts: &[usize], ts: &[usize]) -> CMat<T> {
    let (nx, ny, nc) = (acs.nx, acs.ny, acs.nc);
    let ht = spec.wt / 2;
    let n = dts.len() * nc * spec.wy * spec.wx;
    let mut gram = CMat::zeros(n, n);
    let mut row = vec![Complex::new(T::zero(), T::zero()); n];
    for &t in ts {
        for y0 in 0..(ny + 1).saturating_sub(spec.wy) {
            for x0 in 0..(nx + 1).saturating_sub(spec.wx) {
                let mut k = 0;
                for &d in dts {
                    let s = t + d - ht;
                    for c in 0..nc {
                        let sl = acs.slice(c, s);
                        for qy in 0..spec.wy {
                            let base = (y0 + qy) * nx + x0;
                            row[k..k + spec.wx].copy_from_slice(&sl[base..base + spec.wx]);
                            k += spec.wx;
                        }
                    }
                }
                for i in 0..n {
                    let a = row[i].conj();
                    let g = &mut gram.data[i * n..(i + 1) * n];
                    for (gj, &rj) in g[i..].iter_mut().zip(&row[i..]) {
                        *gj += a * rj;
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram.data[i * n + j] = gram.data[j * n + i].conj();
        }
    }
    gram
}

/// Solves the ridge system for the target column `j` removed from `gram`,
/// returning a full-length weight vector with a zero at `j`.
fn solve_target<T: Real>(gram: &CMat<T>, j: usize, rows: usize, tau: f64) -> Result<Vec<Complex<T>>> {
    let n = gram.rows;
    let keep: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    let mut a = CMat::from_fn(n - 1, n - 1, |r, c| gram.at(keep[r], keep[c]));
    let rhs: Vec<Complex<T>> = keep.iter().map(|&r| gram.at(r, j)).collect();
    let trace: T = (0..n - 1).map(|i| a.at(i, i).re).sum();
    let ridge = T::of(tau) * trace / T::of(rows as f64);
    for i in 0..n - 1 {
        a.at_mut(i, i).re += ridge;
    }
    let g = cholesky_solve(&a, &rhs)?;
    let mut out = vec![Complex::new(T::zero(), T::zero()); n];
    for (k, &i) in keep.iter().enumerate() {
        out[i] = g[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn rnd(rng: &mut ChaCha8Rng) -> C {
        C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn random_kt(nx: usize, ny: usize, nc: usize, nt: usize, rng: &mut ChaCha8Rng) -> KtData<f64> {
        let mut k = KtData::zeros(nx, ny, nc, nt);
        k.data.iter_mut().for_each(|z| *z = rnd(rng));
        k
    }

    fn random_kernel(spec: KernelSpec, nc: usize, nt: usize, rng: &mut ChaCha8Rng) -> SpiritKernel<f64> {
        let mut k = SpiritKernel::zeros(spec, nc, nt).unwrap();
        k.weights.iter_mut().for_each(|z| *z = rnd(rng) * 0.2);
        k.enforce_constraints();
        k
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (nt, wt) in [(1, 3), (2, 3), (4, 3), (3, 1)] {
            let spec = KernelSpec { wx: 3, wy: 5, wt, tau: 0.0 };
            let k = random_kernel(spec, 2, nt, &mut rng);
            for _ in 0..5 {
                let x = random_kt(7, 6, 2, nt, &mut rng);
                let y = random_kt(7, 6, 2, nt, &mut rng);
                let lhs = crate::scalar::inner(&k.apply(&x).unwrap().data, &y.data);
                let rhs = crate::scalar::inner(&x.data, &k.apply_adjoint(&y).unwrap().data);
                assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn apply_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = KernelSpec { wx: 3, wy: 3, wt: 3, tau: 0.0 };
        let k = random_kernel(spec, 2, 3, &mut rng);
        let x = random_kt(5, 4, 2, 3, &mut rng);
        let out = k.apply(&x).unwrap();
        for t in 0..3 {
            for c in 0..2 {
                for y in 0..4isize {
                    for xx in 0..5isize {
                        let mut s = C::new(0.0, 0.0);
                        for d in 0..3 {
                            let st = t as isize + d as isize - 1;
                            if !(0..3).contains(&st) {
                                continue;
                            }
                            for src in 0..2 {
                                for qy in 0..3 {
                                    for qx in 0..3 {
                                        let (sx, sy) = (xx + qx as isize - 1, y + qy as isize - 1);
                                        if sx < 0 || sy < 0 || sx >= 5 || sy >= 4 {
                                            continue;
                                        }
                                        s += k.target(c, t)[k.tap_index(d, src, qy, qx)]
                                            * x.data[x.index(sx as usize, sy as usize, src, st as usize)];
                                    }
                                }
                            }
                        }
                        let got = out.data[out.index(xx as usize, y as usize, c, t)];
                        assert!((got - s).norm() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn duplicated_coils_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut kt = random_kt(32, 8, 2, 1, &mut rng);
        let c0 = kt.slice(0, 0).to_vec();
        kt.slice_mut(1, 0).copy_from_slice(&c0);
        let spec = KernelSpec { tau: 1e-10, ..KernelSpec::default() };
        let k = calibrate_spirit(&kt, &spec).unwrap();
        assert!(k.interior_residual(&kt).unwrap() < 1e-6);
        assert!(k.loss_sc(&kt).unwrap().0 < 1e-10);
        for c in 0..2 {
            assert_eq!(k.target(c, 0)[k.self_tap(c)], C::new(0.0, 0.0));
        }
    }

    #[test]
    fn recovers_known_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (nx, ny, nc, nt) = (40, 12, 3, 3);
        let spec = KernelSpec { wx: 3, wy: 3, wt: 3, tau: 0.0 };
        // For each TSL in turn, coil 0 is synthesized as a random filter of
        // coils 1..nc; every other slice stays random so the system is unique.
        for target_t in 0..nt {
            let mut truth = SpiritKernel::zeros(spec, nc, nt).unwrap();
            let w = truth.target_mut(0, target_t);
            w.iter_mut().for_each(|z| *z = rnd(&mut rng) * 0.3);
            for d in 0..3 {
                for q in 0..9 {
                    w[(d * nc) * 9 + q] = C::new(0.0, 0.0);
                }
            }
            truth.enforce_constraints();
            let mut kt = random_kt(nx, ny, nc, nt, &mut rng);
            let p = truth.apply(&kt).unwrap().slice(0, target_t).to_vec();
            kt.slice_mut(0, target_t).copy_from_slice(&p);
            let k = calibrate_spirit(&extract_acs(&kt, 2, 8).unwrap(), &KernelSpec { tau: 1e-12, ..spec }).unwrap();
            let (got, want) = (k.target(0, target_t), truth.target(0, target_t));
            let err: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let nrm: f64 = want.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(err / nrm < 1e-3, "t={target_t}: rel err {}", err / nrm);
        }
    }

    #[test]
    fn underdetermined_reports_required_acs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let kt = random_kt(8, 6, 2, 1, &mut rng);
        match calibrate_spirit(&kt, &KernelSpec::default()) {
            Err(Error::Underdetermined { rows, unknowns, required_acs, .. }) => {
                assert!(rows < unknowns);
                let spec = KernelSpec::default();
                assert!(rows_per_tsl(8, required_acs, &spec) >= unknowns);
                assert!(rows_per_tsl(8, required_acs - 1, &spec) < unknowns);
            }
            other => panic!("expected underdetermined, got {other:?}"),
        }
    }

    #[test]
    fn loss_sc_zero_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let spec = KernelSpec::default();
        let k = random_kernel(spec, 2, 2, &mut rng);
        let z = KtData::<f64>::zeros(8, 8, 2, 2);
        let (v, g) = k.loss_sc(&z).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data.iter().all(|x| x.norm() == 0.0));

        let x = random_kt(8, 8, 2, 2, &mut rng);
        let (_, g) = k.loss_sc(&x).unwrap();
        let dir = random_kt(8, 8, 2, 2, &mut rng);
        let h = 1e-5;
        let f = |s: f64| {
            let mut y = x.clone();
            y.data.iter_mut().zip(&dir.data).for_each(|(a, b)| *a += b * s);
            k.loss_sc(&y).unwrap().0
        };
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let an = crate::scalar::re_inner(&g.data, &dir.data);
        assert!((fd - an).abs() <= 1e-5 * an.abs(), "fd {fd} an {an}");
    }

    #[test]
    fn tensor_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let k = random_kernel(KernelSpec::default(), 3, 4, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let (q, j) = (dir.path().join("kernel.qkt"), dir.path().join("kernel.json"));
        k.save(&q, &j, 16, 16, 8).unwrap();
        let (back, meta) = SpiritKernel::<f64>::load(&q, &j).unwrap();
        assert_eq!(meta.acs, 8);
        for (a, b) in back.weights.iter().zip(&k.weights) {
            assert!((a - b).norm() < 1e-6);
        }
    }
}
