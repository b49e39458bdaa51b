//! Synthetic ground truth: ellipse phantoms, coil sensitivities, relaxation
//! weighted image series and fully sampled multi-coil k-space.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{Encoder, KtData};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor_io::{first_fastest_to_row_major, row_major_to_first_fastest, Tensor};

/// One elliptical region in normalized field-of-view coordinates `[-1, 1]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Counter-clockwise rotation in degrees.
    pub rotation_deg: f64,
    pub m0: f64,
    pub t1rho_ms: f64,
}

impl Ellipse {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = px - self.center[0];
        let dy = py - self.center[1];
        let u = (dx * c + dy * s) / self.semi_axes[0];
        let v = (-dx * s + dy * c) / self.semi_axes[1];
        u * u + v * v <= 1.0
    }

    /// Half-extent of the axis-aligned bounding box.
    fn half_extent(&self) -> (f64, f64) {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let [a, b] = self.semi_axes;
        (
            (a * a * c * c + b * b * s * s).sqrt(),
            (a * a * s * s + b * b * c * c).sqrt(),
        )
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes[0] * self.semi_axes[1]
    }
}

/// Ellipse list; later regions overwrite earlier ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub regions: Vec<Ellipse>,
}

impl PhantomSpec {
    /// Five nested regions with T1ρ of 40, 65, 55, 80 and 100 ms.
    pub fn brain_like() -> Self {
        let e = |center, semi_axes, rotation_deg, m0, t1rho_ms| Ellipse {
            center,
            semi_axes,
            rotation_deg,
            m0,
            t1rho_ms,
        };
        PhantomSpec {
            regions: vec![
                e([0.0, 0.0], [0.80, 0.92], 0.0, 0.7, 40.0),
                e([0.0, -0.02], [0.68, 0.80], 0.0, 0.9, 65.0),
                e([-0.28, 0.14], [0.22, 0.40], 15.0, 0.75, 55.0),
                e([0.28, 0.14], [0.22, 0.40], -15.0, 0.8, 80.0),
                e([0.0, -0.46], [0.30, 0.18], 0.0, 1.0, 100.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::Invalid("empty region list".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            let bad = |why: &str| Err(Error::Invalid(format!("phantom region {i}: {why}")));
            if !(r.t1rho_ms > 0.0 && r.t1rho_ms.is_finite()) {
                return bad("T1rho must be > 0");
            }
            if !(r.m0 >= 0.0 && r.m0.is_finite()) {
                return bad("M0 must be >= 0");
            }
            if !(r.semi_axes[0] > 0.0 && r.semi_axes[1] > 0.0) {
                return bad("semi-axes must be > 0");
            }
            let (hx, hy) = r.half_extent();
            if r.center[0].abs() + hx > 1.0 + 1e-12 || r.center[1].abs() + hy > 1.0 + 1e-12 {
                return bad("ellipse leaves the field of view");
            }
        }
        Ok(())
    }
}

/// Normalized coordinate of pixel `i` on an `n`-pixel axis (pixel centers).
pub fn pixel_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// Ground-truth parameter maps, `x` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomMaps {
    pub nx: usize,
    pub ny: usize,
    pub m0: Vec<f64>,
    pub t1rho_ms: Vec<f64>,
    pub support: Vec<bool>,
}

pub fn make_phantom(spec: &PhantomSpec, nx: usize, ny: usize) -> Result<PhantomMaps> {
    spec.validate()?;
    if nx == 0 || ny == 0 {
        return Err(Error::Invalid("phantom grid must be non-empty".into()));
    }
    let n = nx * ny;
    let mut m0 = vec![0.0; n];
    let mut t1rho_ms = vec![0.0; n];
    let mut support = vec![false; n];
    for y in 0..ny {
        let py = pixel_center(y, ny);
        for x in 0..nx {
            let px = pixel_center(x, nx);
            let i = x + nx * y;
            for r in &spec.regions {
                if r.contains(px, py) {
                    m0[i] = r.m0;
                    t1rho_ms[i] = r.t1rho_ms;
                    support[i] = true;
                }
            }
        }
    }
    Ok(PhantomMaps {
        nx,
        ny,
        m0,
        t1rho_ms,
        support,
    })
}

/// Complex coil sensitivities, index `x + nx·(y + ny·c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps<T> {
    pub nx: usize,
    pub ny: usize,
    pub nc: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> CoilMaps<T> {
    pub fn ones(nx: usize, ny: usize) -> Self {
        CoilMaps {
            nx,
            ny,
            nc: 1,
            data: vec![Complex::new(T::one(), T::zero()); nx * ny],
        }
    }

    pub fn coil(&self, c: usize) -> &[Complex<T>] {
        let n = self.nx * self.ny;
        &self.data[c * n..(c + 1) * n]
    }

    /// `Σ_c |c(p)|²` per pixel.
    pub fn sum_of_squares(&self) -> Vec<T> {
        let n = self.nx * self.ny;
        (0..n)
            .map(|p| (0..self.nc).map(|c| self.data[p + c * n].norm_sqr()).sum())
            .collect()
    }

    pub fn cast<U: Real>(&self) -> CoilMaps<U> {
        CoilMaps {
            nx: self.nx,
            ny: self.ny,
            nc: self.nc,
            data: self.data.iter().map(|&z| crate::scalar::cast_complex(z)).collect(),
        }
    }

    /// Tensor with logical dims `[N_x, N_y, N_c]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let dims = vec![self.nx, self.ny, self.nc];
        let data: Vec<_> = self.data.iter().map(|&z| crate::scalar::cast_complex(z)).collect();
        Tensor::complex(dims.clone(), first_fastest_to_row_major(&data, &dims))
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 3 {
            return Err(Error::Shape(format!("coil maps need 3 dims, got {:?}", t.dims)));
        }
        let data = row_major_to_first_fastest(t.as_complex()?, &t.dims);
        Ok(CoilMaps {
            nx: t.dims[0],
            ny: t.dims[1],
            nc: t.dims[2],
            data: data.into_iter().map(crate::scalar::cast_complex).collect(),
        })
    }
}

/// Smooth synthetic coil maps: Gaussian magnitude bumps centred on points
/// evenly spaced on a circle around the field of view, a random linear phase
/// ramp per coil, and pixel-wise normalization to `Σ_c |c|² = 1`.
pub fn make_coil_maps<T: Real>(nx: usize, ny: usize, nc: usize, seed: u64) -> Result<CoilMaps<T>> {
    if nx == 0 || ny == 0 || nc == 0 {
        return Err(Error::Invalid(format!(
            "coil maps need positive sizes, got {nx}x{ny}x{nc}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ramp = Uniform::new(-1.0f64, 1.0).expect("valid range");
    let offset = Uniform::new(-std::f64::consts::PI, std::f64::consts::PI).expect("valid range");
    let coils: Vec<(f64, f64, f64, f64, f64)> = (0..nc)
        .map(|j| {
            let angle = std::f64::consts::TAU * j as f64 / nc as f64 + std::f64::consts::FRAC_PI_4;
            (
                1.1 * angle.cos(),
                1.1 * angle.sin(),
                ramp.sample(&mut rng),
                ramp.sample(&mut rng),
                offset.sample(&mut rng),
            )
        })
        .collect();
    let width2 = 2.0 * 0.75f64 * 0.75;
    let n = nx * ny;
    let mut raw = vec![Complex::new(0.0f64, 0.0); n * nc];
    for y in 0..ny {
        let py = pixel_center(y, ny);
        for x in 0..nx {
            let px = pixel_center(x, nx);
            let p = x + nx * y;
            let mut ss = 0.0;
            for (c, &(cx, cy, a, b, phi0)) in coils.iter().enumerate() {
                let d2 = (px - cx).powi(2) + (py - cy).powi(2);
                let mag = (-d2 / width2).exp();
                let z = Complex::from_polar(mag, phi0 + a * px + b * py);
                ss += z.norm_sqr();
                raw[p + c * n] = z;
            }
            let inv = 1.0 / ss.sqrt();
            for c in 0..nc {
                raw[p + c * n] *= inv;
            }
        }
    }
    Ok(CoilMaps {
        nx,
        ny,
        nc,
        data: raw.into_iter().map(crate::scalar::cast_complex).collect(),
    })
}

/// Complex image stack, index `x + nx·(y + ny·t)`, one frame per TSL.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSeries<T> {
    pub nx: usize,
    pub ny: usize,
    pub tsl_ms: Vec<f64>,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> ImageSeries<T> {
    pub fn zeros(nx: usize, ny: usize, tsl_ms: Vec<f64>) -> Self {
        let n = nx * ny * tsl_ms.len();
        ImageSeries {
            nx,
            ny,
            tsl_ms,
            data: vec![Complex::new(T::zero(), T::zero()); n],
        }
    }

    pub fn nt(&self) -> usize {
        self.tsl_ms.len()
    }

    pub fn nv(&self) -> usize {
        self.nx * self.ny
    }

    pub fn frame(&self, t: usize) -> &[Complex<T>] {
        let n = self.nv();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex<T>] {
        let n = self.nv();
        &mut self.data[t * n..(t + 1) * n]
    }

    /// Temporal signal of voxel `p = x + nx·y`.
    pub fn voxel(&self, p: usize) -> Vec<Complex<T>> {
        let n = self.nv();
        (0..self.nt()).map(|t| self.data[p + t * n]).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.nt() == other.nt()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm().as_f64()).collect()
    }

    pub fn frame_magnitude(&self, t: usize) -> Vec<f64> {
        self.frame(t).iter().map(|z| z.norm().as_f64()).collect()
    }

    pub fn cast<U: Real>(&self) -> ImageSeries<U> {
        ImageSeries {
            nx: self.nx,
            ny: self.ny,
            tsl_ms: self.tsl_ms.clone(),
            data: self.data.iter().map(|&z| crate::scalar::cast_complex(z)).collect(),
        }
    }

    /// Tensor with logical dims `[N_x, N_y, N_TSL]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let dims = vec![self.nx, self.ny, self.nt()];
        let data: Vec<_> = self.data.iter().map(|&z| crate::scalar::cast_complex(z)).collect();
        Tensor::complex(dims.clone(), first_fastest_to_row_major(&data, &dims))
    }

    pub fn from_tensor(t: &Tensor, tsl_ms: Vec<f64>) -> Result<Self> {
        if t.dims.len() != 3 || t.dims[2] != tsl_ms.len() {
            return Err(Error::Shape(format!(
                "image series needs dims [N_x, N_y, {}], got {:?}",
                tsl_ms.len(),
                t.dims
            )));
        }
        let data = row_major_to_first_fastest(t.as_complex()?, &t.dims);
        Ok(ImageSeries {
            nx: t.dims[0],
            ny: t.dims[1],
            tsl_ms,
            data: data.into_iter().map(crate::scalar::cast_complex).collect(),
        })
    }
}

/// Smooth quadratic phase (radians) used to make the series complex.
pub fn quadratic_phase(px: f64, py: f64) -> f64 {
    0.2 + 0.5 * px * px - 0.4 * py * py + 0.3 * px * py
}

/// `M_k = M0 · exp(−TSL_k / T1ρ)` per pixel, optionally times a smooth phase.
pub fn simulate_weighted_images(
    maps: &PhantomMaps,
    tsl_ms: &[f64],
    with_phase: bool,
) -> Result<ImageSeries<f64>> {
    if maps.m0.len() != maps.nx * maps.ny || maps.t1rho_ms.len() != maps.m0.len() {
        return Err(Error::Shape("M0 and T1rho maps differ in size".into()));
    }
    if tsl_ms.is_empty() {
        return Err(Error::Invalid("empty TSL list".into()));
    }
    let (nx, ny) = (maps.nx, maps.ny);
    let nv = nx * ny;
    for p in 0..nv {
        if maps.m0[p] > 0.0 && !(maps.t1rho_ms[p] > 0.0) {
            return Err(Error::Invalid(format!(
                "T1rho = {} at pixel ({}, {}) where M0 > 0",
                maps.t1rho_ms[p],
                p % nx,
                p / nx
            )));
        }
    }
    let mut out = ImageSeries::zeros(nx, ny, tsl_ms.to_vec());
    for (t, &tsl) in tsl_ms.iter().enumerate() {
        let frame = out.frame_mut(t);
        for y in 0..ny {
            for x in 0..nx {
                let p = x + nx * y;
                if maps.m0[p] == 0.0 {
                    continue;
                }
                let m = maps.m0[p] * (-tsl / maps.t1rho_ms[p]).exp();
                frame[p] = if with_phase {
                    Complex::from_polar(m, quadratic_phase(pixel_center(x, nx), pixel_center(y, ny)))
                } else {
                    Complex::new(m, 0.0)
                };
            }
        }
    }
    Ok(out)
}

/// Fully sampled k-space with i.i.d. complex Gaussian noise of standard
/// deviation `noise_sigma` per real and imaginary component.
///
/// The noise stream for each (coil, TSL) slice is derived from `seed` and the
/// slice index, so the result does not depend on evaluation order.
pub fn simulate_kt<T: Real>(
    images: &ImageSeries<T>,
    coils: &CoilMaps<T>,
    noise_sigma: f64,
    seed: u64,
) -> Result<KtData<T>> {
    let encoder = Encoder::new(coils.clone())?;
    let mut kt = encoder.forward_full(images)?;
    if noise_sigma > 0.0 {
        let slice = kt.nx * kt.ny;
        let nc = kt.nc;
        kt.data
            .par_chunks_mut(slice)
            .enumerate()
            .for_each(|(idx, chunk)| {
                let (t, c) = (idx / nc, idx % nc);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((c * 1_000_003 + t) as u64);
                for z in chunk.iter_mut() {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    *z += Complex::new(T::of(noise_sigma * re), T::of(noise_sigma * im));
                }
            });
    }
    Ok(kt)
}
