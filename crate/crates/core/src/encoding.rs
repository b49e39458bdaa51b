//! Forward-model operators: centered orthonormal 2-D DFT, coil weighting and
//! line masking, with their adjoints.
//!
//! `E_full = F∘C` maps an image series to multi-coil k-space; `E = M∘E_full`
//! additionally keeps only acquired lines.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::phantom::{CoilMaps, ImageSeries};
use crate::sampling::SamplingMask;
use crate::scalar::Real;
use crate::tensor_io::{first_fastest_to_row_major, row_major_to_first_fastest, Tensor};

/// Multi-coil k-t data, index `x + nx·(y + ny·(c + nc·t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct KtData<T> {
    pub nx: usize,
    pub ny: usize,
    pub nc: usize,
    pub nt: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> KtData<T> {
    pub fn zeros(nx: usize, ny: usize, nc: usize, nt: usize) -> Self {
        KtData {
            nx,
            ny,
            nc,
            nt,
            data: vec![Complex::new(T::zero(), T::zero()); nx * ny * nc * nt],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize, t: usize) -> usize {
        x + self.nx * (y + self.ny * (c + self.nc * t))
    }

    pub fn slice(&self, c: usize, t: usize) -> &[Complex<T>] {
        let n = self.nx * self.ny;
        let s = (c + self.nc * t) * n;
        &self.data[s..s + n]
    }

    pub fn slice_mut(&mut self, c: usize, t: usize) -> &mut [Complex<T>] {
        let n = self.nx * self.ny;
        let s = (c + self.nc * t) * n;
        &mut self.data[s..s + n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.nx, self.ny, self.nc, self.nt) == (other.nx, other.ny, other.nc, other.nt)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn cast<U: Real>(&self) -> KtData<U> {
        KtData {
            nx: self.nx,
            ny: self.ny,
            nc: self.nc,
            nt: self.nt,
            data: self.data.iter().map(|&z| crate::scalar::cast_complex(z)).collect(),
        }
    }

    /// Tensor with logical dims `[N_x, N_y, N_c, N_TSL]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let dims = vec![self.nx, self.ny, self.nc, self.nt];
        let data: Vec<_> = self.data.iter().map(|&z| crate::scalar::cast_complex(z)).collect();
        Tensor::complex(dims.clone(), first_fastest_to_row_major(&data, &dims))
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 4 {
            return Err(Error::Shape(format!("k-t data needs 4 dims, got {:?}", t.dims)));
        }
        let data = row_major_to_first_fastest(t.as_complex()?, &t.dims);
        Ok(KtData {
            nx: t.dims[0],
            ny: t.dims[1],
            nc: t.dims[2],
            nt: t.dims[3],
            data: data.into_iter().map(crate::scalar::cast_complex).collect(),
        })
    }
}

/// Centered, orthonormal 2-D DFT on `nx × ny` images stored x-fastest.
///
/// `fft2c(x) = fftshift(FFT(ifftshift(x))) / √(nx·ny)`, so DC sits at
/// `(nx/2, ny/2)` and `‖fft2c(x)‖₂ = ‖x‖₂`.
pub struct Fft2c<T: Real> {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<T>>,
    fwd_y: Arc<dyn Fft<T>>,
    inv_x: Arc<dyn Fft<T>>,
    inv_y: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> Clone for Fft2c<T> {
    fn clone(&self) -> Self {
        Fft2c {
            nx: self.nx,
            ny: self.ny,
            fwd_x: Arc::clone(&self.fwd_x),
            fwd_y: Arc::clone(&self.fwd_y),
            inv_x: Arc::clone(&self.inv_x),
            inv_y: Arc::clone(&self.inv_y),
            scale: self.scale,
        }
    }
}

impl<T: Real> Fft2c<T> {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2c {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_x: planner.plan_fft_inverse(nx),
            inv_y: planner.plan_fft_inverse(ny),
            scale: T::one() / T::of((nx * ny) as f64).sqrt(),
        }
    }

    pub fn forward(&self, img: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut buf = img.to_vec();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse(&self, ksp: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut buf = ksp.to_vec();
        self.inverse_in_place(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.fwd_x, &self.fwd_y);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.inv_x, &self.inv_y);
    }

    fn transform(&self, buf: &mut [Complex<T>], fx: &Arc<dyn Fft<T>>, fy: &Arc<dyn Fft<T>>) {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(buf.len(), nx * ny, "fft2c: buffer is not nx*ny");
        // ifftshift moves index ⌊n/2⌋ to 0; fftshift moves 0 back to ⌊n/2⌋.
        let mut work = vec![Complex::new(T::zero(), T::zero()); nx * ny];
        for y in 0..ny {
            let sy = (y + ny / 2) % ny;
            for x in 0..nx {
                let sx = (x + nx / 2) % nx;
                work[x + nx * y] = buf[sx + nx * sy];
            }
        }
        let scratch_len = fx
            .get_inplace_scratch_len()
            .max(fy.get_inplace_scratch_len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
        fx.process_with_scratch(&mut work, &mut scratch);
        // Columns via transpose.
        let mut cols = vec![Complex::new(T::zero(), T::zero()); nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                cols[y + ny * x] = work[x + nx * y];
            }
        }
        fy.process_with_scratch(&mut cols, &mut scratch);
        let (hx, hy) = (nx - nx / 2, ny - ny / 2);
        for y in 0..ny {
            let sy = (y + hy) % ny;
            for x in 0..nx {
                let sx = (x + hx) % nx;
                buf[x + nx * y] = cols[sy + ny * sx] * self.scale;
            }
        }
    }
}

/// Coil-weighted Fourier encoder bound to one set of sensitivity maps.
#[derive(Clone)]
pub struct Encoder<T: Real> {
    coils: CoilMaps<T>,
    fft: Fft2c<T>,
}

impl<T: Real> Encoder<T> {
    pub fn new(coils: CoilMaps<T>) -> Result<Self> {
        if coils.data.len() != coils.nx * coils.ny * coils.nc || coils.data.is_empty() {
            return Err(Error::Shape("coil map buffer does not match its dims".into()));
        }
        let fft = Fft2c::new(coils.nx, coils.ny);
        Ok(Encoder { coils, fft })
    }

    pub fn coils(&self) -> &CoilMaps<T> {
        &self.coils
    }

    pub fn fft(&self) -> &Fft2c<T> {
        &self.fft
    }

    fn check_images(&self, x: &ImageSeries<T>) -> Result<()> {
        if x.nx != self.coils.nx || x.ny != self.coils.ny || x.data.len() != x.nv() * x.nt() {
            return Err(Error::Shape(format!(
                "image series {}x{} does not match coil maps {}x{}",
                x.nx, x.ny, self.coils.nx, self.coils.ny
            )));
        }
        Ok(())
    }

    fn check_kt(&self, y: &KtData<T>) -> Result<()> {
        if y.nx != self.coils.nx || y.ny != self.coils.ny || y.nc != self.coils.nc {
            return Err(Error::Shape(format!(
                "k-space {}x{}x{} does not match coil maps {}x{}x{}",
                y.nx, y.ny, y.nc, self.coils.nx, self.coils.ny, self.coils.nc
            )));
        }
        Ok(())
    }

    /// `E_full x`: per coil and TSL, `fft2c(C_c ⊙ x_t)`.
    pub fn forward_full(&self, x: &ImageSeries<T>) -> Result<KtData<T>> {
        self.check_images(x)?;
        let (nx, ny, nc, nt) = (x.nx, x.ny, self.coils.nc, x.nt());
        let mut out = KtData::zeros(nx, ny, nc, nt);
        out.data
            .par_chunks_mut(nx * ny)
            .enumerate()
            .for_each(|(idx, slice)| {
                let (t, c) = (idx / nc, idx % nc);
                for ((o, &s), &v) in slice.iter_mut().zip(self.coils.coil(c)).zip(x.frame(t)) {
                    *o = s * v;
                }
                self.fft.forward_in_place(slice);
            });
        Ok(out)
    }

    /// `E_full* y`: per TSL, `Σ_c conj(C_c) ⊙ ifft2c(y_{c,t})`.
    pub fn adjoint_full(&self, y: &KtData<T>) -> Result<ImageSeries<T>> {
        self.check_kt(y)?;
        let (nx, ny, nc, nt) = (y.nx, y.ny, y.nc, y.nt);
        let n = nx * ny;
        let mut out = ImageSeries::zeros(nx, ny, vec![0.0; nt]);
        out.data.par_chunks_mut(n).enumerate().for_each(|(t, frame)| {
            let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
            for c in 0..nc {
                buf.copy_from_slice(y.slice(c, t));
                self.fft.inverse_in_place(&mut buf);
                for ((o, &s), &v) in frame.iter_mut().zip(self.coils.coil(c)).zip(&buf) {
                    *o += s.conj() * v;
                }
            }
        });
        Ok(out)
    }

    /// Like [`adjoint_full`](Self::adjoint_full) but attaches TSLs.
    pub fn adjoint_full_with_tsl(&self, y: &KtData<T>, tsl_ms: &[f64]) -> Result<ImageSeries<T>> {
        if tsl_ms.len() != y.nt {
            return Err(Error::Shape(format!(
                "{} TSLs for k-space with {} frames",
                tsl_ms.len(),
                y.nt
            )));
        }
        let mut x = self.adjoint_full(y)?;
        x.tsl_ms = tsl_ms.to_vec();
        Ok(x)
    }

    /// `E x = M E_full x`.
    pub fn forward(&self, x: &ImageSeries<T>, mask: &SamplingMask) -> Result<KtData<T>> {
        let mut k = self.forward_full(x)?;
        apply_mask_in_place(&mut k, mask)?;
        Ok(k)
    }

    /// `E* y = E_full* M y`.
    pub fn adjoint(&self, y: &KtData<T>, mask: &SamplingMask) -> Result<ImageSeries<T>> {
        let masked = apply_mask(y, mask)?;
        self.adjoint_full(&masked)
    }
}

fn check_mask<T: Real>(y: &KtData<T>, m: &SamplingMask) -> Result<()> {
    if y.ny != m.ny || y.nt != m.nt {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match k-space lines {}x{}",
            m.ny, m.nt, y.ny, y.nt
        )));
    }
    Ok(())
}

pub fn apply_mask_in_place<T: Real>(y: &mut KtData<T>, m: &SamplingMask) -> Result<()> {
    check_mask(y, m)?;
    let (nx, ny, nc) = (y.nx, y.ny, y.nc);
    for t in 0..y.nt {
        for c in 0..nc {
            let slice = y.slice_mut(c, t);
            for yy in 0..ny {
                if !m.is_sampled(yy, t) {
                    slice[yy * nx..(yy + 1) * nx]
                        .iter_mut()
                        .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                }
            }
        }
    }
    Ok(())
}

/// `M y`: zero every unacquired line.
pub fn apply_mask<T: Real>(y: &KtData<T>, m: &SamplingMask) -> Result<KtData<T>> {
    let mut out = y.clone();
    apply_mask_in_place(&mut out, m)?;
    Ok(out)
}

/// `(I − M) y`: zero every acquired line.
pub fn apply_mask_complement<T: Real>(y: &KtData<T>, m: &SamplingMask) -> Result<KtData<T>> {
    check_mask(y, m)?;
    let mut out = y.clone();
    let (nx, ny, nc) = (y.nx, y.ny, y.nc);
    for t in 0..y.nt {
        for c in 0..nc {
            let slice = out.slice_mut(c, t);
            for yy in 0..ny {
                if m.is_sampled(yy, t) {
                    slice[yy * nx..(yy + 1) * nx]
                        .iter_mut()
                        .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::make_coil_maps;
    use crate::sampling::make_mask;
    use crate::scalar::{inner, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex<f64>> {
        (0..n)
            .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    /// Direct DFT sum with the same centering, as an independent reference.
    fn dft2c_direct(img: &[Complex<f64>], nx: usize, ny: usize) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::new(0.0, 0.0); nx * ny];
        let scale = 1.0 / ((nx * ny) as f64).sqrt();
        for ky in 0..ny {
            for kx in 0..nx {
                let fx = kx as f64 - (nx / 2) as f64;
                let fy = ky as f64 - (ny / 2) as f64;
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..ny {
                    for x in 0..nx {
                        let rx = x as f64 - (nx / 2) as f64;
                        let ry = y as f64 - (ny / 2) as f64;
                        let ph = -std::f64::consts::TAU * (fx * rx / nx as f64 + fy * ry / ny as f64);
                        acc += img[x + nx * y] * Complex::from_polar(1.0, ph);
                    }
                }
                out[kx + nx * ky] = acc * scale;
            }
        }
        out
    }

    #[test]
    fn impulse_to_constant() {
        let (nx, ny) = (8, 6);
        let mut img = vec![Complex::new(0.0, 0.0); nx * ny];
        img[nx / 2 + nx * (ny / 2)] = Complex::new(1.0, 0.0);
        let k = Fft2c::<f64>::new(nx, ny).forward(&img);
        let expected = 1.0 / ((nx * ny) as f64).sqrt();
        for z in k {
            assert!((z.re - expected).abs() < 1e-14 && z.im.abs() < 1e-14);
        }
    }

    #[test]
    fn unitary_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (nx, ny) in [(8, 8), (7, 5), (16, 12)] {
            let f = Fft2c::<f64>::new(nx, ny);
            let x = random_vec(nx * ny, &mut rng);
            let k = f.forward(&x);
            assert!((norm2(&k) - norm2(&x)).abs() < 1e-10 * norm2(&x));
            let back = f.inverse(&k);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_direct_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (nx, ny) in [(8, 8), (5, 6)] {
            let x = random_vec(nx * ny, &mut rng);
            let fast = Fft2c::<f64>::new(nx, ny).forward(&x);
            let slow = dft2c_direct(&x, nx, ny);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sinusoid_gives_conjugate_peaks() {
        let (nx, ny) = (8, 8);
        let (fx, fy) = (2i64, 1i64);
        let img: Vec<Complex<f64>> = (0..nx * ny)
            .map(|i| {
                let (x, y) = ((i % nx) as f64 - 4.0, (i / nx) as f64 - 4.0);
                let arg = std::f64::consts::TAU * (fx as f64 * x / 8.0 + fy as f64 * y / 8.0);
                Complex::new(arg.cos(), 0.0)
            })
            .collect();
        let k = Fft2c::<f64>::new(nx, ny).forward(&img);
        let oracle = dft2c_direct(&img, nx, ny);
        let peak = |kx: i64, ky: i64| ((kx + 4) as usize) + nx * ((ky + 4) as usize);
        let p1 = peak(fx, fy);
        let p2 = peak(-fx, -fy);
        for (i, z) in k.iter().enumerate() {
            assert!((z - oracle[i]).norm() < 1e-12);
            if i == p1 || i == p2 {
                assert!((z.re - 4.0).abs() < 1e-12, "peak {i}: {z}");
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
    }

    fn random_series(nx: usize, ny: usize, nt: usize, rng: &mut ChaCha8Rng) -> ImageSeries<f64> {
        ImageSeries {
            nx,
            ny,
            tsl_ms: (0..nt).map(|t| t as f64).collect(),
            data: random_vec(nx * ny * nt, rng),
        }
    }

    fn random_kt(nx: usize, ny: usize, nc: usize, nt: usize, rng: &mut ChaCha8Rng) -> KtData<f64> {
        KtData {
            nx,
            ny,
            nc,
            nt,
            data: random_vec(nx * ny * nc * nt, rng),
        }
    }

    #[test]
    fn single_coil_is_plain_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_series(6, 4, 2, &mut rng);
        let e = Encoder::new(CoilMaps::ones(6, 4)).unwrap();
        let k = e.forward_full(&x).unwrap();
        let f = Fft2c::new(6, 4);
        for t in 0..2 {
            assert_eq!(k.slice(0, t), &f.forward(x.frame(t))[..]);
        }
    }

    #[test]
    fn isometry_under_normalized_coils() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_series(16, 12, 3, &mut rng);
        let e = Encoder::new(make_coil_maps(16, 12, 4, 0).unwrap()).unwrap();
        let k = e.forward_full(&x).unwrap();
        let (a, b) = (norm2(&k.data).powi(2), norm2(&x.data).powi(2));
        assert!((a - b).abs() < 1e-10 * b);
        let back = e.adjoint_full(&k).unwrap();
        for (p, q) in back.data.iter().zip(&x.data) {
            assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coils = make_coil_maps::<f64>(12, 10, 3, 4).unwrap();
        // Non-normalized coils exercise the adjoint beyond the isometric case.
        let coils = CoilMaps {
            data: coils.data.iter().map(|z| z * Complex::new(1.3, -0.4)).collect(),
            ..coils
        };
        let e = Encoder::new(coils).unwrap();
        let mask = make_mask(10, 2.0, 2, 4, 1).unwrap();
        for _ in 0..5 {
            let x = random_series(12, 10, 4, &mut rng);
            let y = random_kt(12, 10, 3, 4, &mut rng);
            let ex = e.forward_full(&x).unwrap();
            let lhs = inner(&ex.data, &y.data);
            let rhs = inner(&x.data, &e.adjoint_full(&y).unwrap().data);
            assert!((lhs - rhs).norm() <= 1e-10 * norm2(&ex.data) * norm2(&y.data));

            let ex = e.forward(&x, &mask).unwrap();
            let lhs = inner(&ex.data, &y.data);
            let rhs = inner(&x.data, &e.adjoint(&y, &mask).unwrap().data);
            assert!((lhs - rhs).norm() <= 1e-10 * norm2(&ex.data) * norm2(&y.data));
        }
    }

    #[test]
    fn mask_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_kt(8, 16, 2, 3, &mut rng);
        let m = make_mask(16, 4.0, 2, 3, 0).unwrap();
        let once = apply_mask(&y, &m).unwrap();
        assert_eq!(apply_mask(&once, &m).unwrap(), once);
        assert!(norm2(&once.data) <= norm2(&y.data));
        let full = SamplingMask::full(16, 3);
        assert_eq!(apply_mask(&y, &full).unwrap(), y);
        // Self-adjoint.
        let z = random_kt(8, 16, 2, 3, &mut rng);
        let a = inner(&apply_mask(&y, &m).unwrap().data, &z.data);
        let b = inner(&y.data, &apply_mask(&z, &m).unwrap().data);
        assert!((a - b).norm() < 1e-12);
        // M + (I - M) = I
        let comp = apply_mask_complement(&y, &m).unwrap();
        for ((a, b), c) in once.data.iter().zip(&comp.data).zip(&y.data) {
            assert_eq!(a + b, *c);
        }
    }

    #[test]
    fn encode_zero_is_zero() {
        let e = Encoder::new(make_coil_maps::<f64>(8, 8, 2, 0).unwrap()).unwrap();
        let m = make_mask(8, 2.0, 2, 2, 0).unwrap();
        let k = e.forward(&ImageSeries::zeros(8, 8, vec![1.0, 2.0]), &m).unwrap();
        assert!(k.data.iter().all(|z| z.norm() == 0.0));
        let x = e.adjoint_full(&KtData::zeros(8, 8, 2, 2)).unwrap();
        assert!(x.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn shape_mismatch_reported() {
        let e = Encoder::new(CoilMaps::<f64>::ones(8, 8)).unwrap();
        assert!(e.forward_full(&ImageSeries::zeros(4, 8, vec![1.0])).is_err());
        assert!(e.adjoint_full(&KtData::zeros(8, 8, 2, 1)).is_err());
    }

    #[test]
    fn f32_encoder_close_to_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_series(8, 8, 2, &mut rng);
        let c = make_coil_maps::<f64>(8, 8, 2, 0).unwrap();
        let k64 = Encoder::new(c.clone()).unwrap().forward_full(&x).unwrap();
        let k32 = Encoder::new(c.cast::<f32>()).unwrap().forward_full(&x.cast::<f32>()).unwrap();
        for (a, b) in k64.data.iter().zip(&k32.data) {
            assert!((a.re - b.re as f64).abs() < 1e-5 && (a.im - b.im as f64).abs() < 1e-5);
        }
    }
}
