//! Sine and cosine for the activation layers: Cody–Waite reduction by π/2
//! followed by minimax polynomials on `[-π/4, π/4]`. Inlinable, so the
//! activation loops avoid a libm call per element.

/// Beyond this magnitude the three-term reduction loses accuracy and the
/// standard library is used instead.
const REDUCTION_LIMIT: f64 = 1.0e5;

/// Adding and subtracting 1.5·2^52 rounds to the nearest integer.
const ROUNDER: f64 = 6_755_399_441_055_744.0;

const FRAC_2_PI: f64 = 0.636_619_772_367_581_4;
const PIO2_1: f64 = 1.570_796_326_734_125_6;
const PIO2_2: f64 = 6.077_100_506_303_966e-11;
const PIO2_3: f64 = 2.022_266_248_795_950_6e-21;

const S1: f64 = -1.666_666_666_666_663_2e-1;
const S2: f64 = 8.333_333_333_322_49e-3;
const S3: f64 = -1.984_126_982_985_795e-4;
const S4: f64 = 2.755_731_370_707_007e-6;
const S5: f64 = -2.505_076_025_340_686_3e-8;
const S6: f64 = 1.589_690_995_211_55e-10;

const C1: f64 = 4.166_666_666_666_660_2e-2;
const C2: f64 = -1.388_888_888_887_411e-3;
const C3: f64 = 2.480_158_728_947_673e-5;
const C4: f64 = -2.755_731_435_139_066_3e-7;
const C5: f64 = 2.087_572_321_298_175e-9;
const C6: f64 = -1.135_964_755_778_819_5e-11;

#[inline(always)]
fn kernel(r: f64) -> (f64, f64) {
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    (s, c)
}

#[inline(always)]
fn reduce(x: f64) -> (f64, f64) {
    let k = (x * FRAC_2_PI + ROUNDER) - ROUNDER;
    (((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3, k)
}

/// Branch-free quadrant fix-up so the slice loops vectorize.
#[inline(always)]
fn rotate(s: f64, c: f64, k: f64) -> (f64, f64) {
    // k mod 4 without floor(), which is a libm call on baseline x86-64.
    let q = k - 4.0 * (((k - 1.5) * 0.25 + ROUNDER) - ROUNDER);
    let odd = q == 1.0 || q == 3.0;
    let (s, c) = if odd { (c, s) } else { (s, c) };
    let sin_neg = q >= 2.0;
    let cos_neg = q == 1.0 || q == 2.0;
    (if sin_neg { -s } else { s }, if cos_neg { -c } else { c })
}

#[inline(always)]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < REDUCTION_LIMIT) {
        return x.sin_cos();
    }
    sin_cos_unchecked(x)
}

#[inline(always)]
pub fn sin(x: f64) -> f64 {
    sin_cos(x).0
}

const CHUNK: usize = 256;

#[inline(always)]
fn in_range(v: &[f64], w0: f64) -> bool {
    let m = v.iter().fold(0.0f64, |m, &x| m.max((w0 * x).abs()));
    m < REDUCTION_LIMIT
}

#[inline(always)]
fn sin_cos_unchecked(x: f64) -> (f64, f64) {
    let (r, k) = reduce(x);
    let (s, c) = kernel(r);
    rotate(s, c, k)
}

#[inline(always)]
fn sin_slice_body(v: &mut [f64], w0: f64) {
    for chunk in v.chunks_mut(CHUNK) {
        if in_range(chunk, w0) {
            for x in chunk.iter_mut() {
                *x = sin_cos_unchecked(w0 * *x).0;
            }
        } else {
            for x in chunk.iter_mut() {
                *x = sin(w0 * *x);
            }
        }
    }
}

#[inline(always)]
fn sin_cos_slice_body(v: &mut [f64], d: &mut [f64], w0: f64) {
    for (cv, cd) in v.chunks_mut(CHUNK).zip(d.chunks_mut(CHUNK)) {
        if in_range(cv, w0) {
            for (x, dx) in cv.iter_mut().zip(cd.iter_mut()) {
                let (s, c) = sin_cos_unchecked(w0 * *x);
                *x = s;
                *dx = w0 * c;
            }
        } else {
            for (x, dx) in cv.iter_mut().zip(cd.iter_mut()) {
                let (s, c) = sin_cos(w0 * *x);
                *x = s;
                *dx = w0 * c;
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn sin_slice_avx2(v: &mut [f64], w0: f64) {
    sin_slice_body(v, w0)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn sin_cos_slice_avx2(v: &mut [f64], d: &mut [f64], w0: f64) {
    sin_cos_slice_body(v, d, w0)
}

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

/// `v ← sin(w0·v)`.
pub fn sin_slice(v: &mut [f64], w0: f64) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { sin_slice_avx2(v, w0) };
        return;
    }
    sin_slice_body(v, w0)
}

/// `v ← sin(w0·v)` and `d ← w0·cos(w0·v)`.
pub fn sin_cos_slice(v: &mut [f64], d: &mut [f64], w0: f64) {
    assert_eq!(v.len(), d.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { sin_cos_slice_avx2(v, d, w0) };
        return;
    }
    sin_cos_slice_body(v, d, w0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for scale in [1e-6, 1.0, 10.0, 300.0, 2e4, 1e6] {
            for _ in 0..20_000 {
                let x = (rng.random::<f64>() - 0.5) * 2.0 * scale;
                let (s, c) = sin_cos(x);
                let (rs, rc) = x.sin_cos();
                assert!((s - rs).abs() < 4e-16 * (1.0 + x.abs() * 1e-3), "sin({x})");
                assert!((c - rc).abs() < 4e-16 * (1.0 + x.abs() * 1e-3), "cos({x})");
            }
        }
        assert!(sin(f64::NAN).is_nan());
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 - 500.0) * 0.37).collect();
        let mut v = xs.clone();
        let mut d = vec![0.0; xs.len()];
        sin_cos_slice(&mut v, &mut d, 3.0);
        let mut w = xs.clone();
        sin_slice(&mut w, 3.0);
        for i in 0..xs.len() {
            let (s, c) = sin_cos(3.0 * xs[i]);
            assert_eq!(v[i], s);
            assert_eq!(w[i], s);
            assert_eq!(d[i], 3.0 * c);
        }
        assert_eq!(sin(0.0), 0.0);
    }
}

/// Applies `f` to `v` viewed as `f64`, converting through a buffer for other
/// scalar types.
fn with_f64<T: crate::scalar::Real>(v: &mut [T], f: impl FnOnce(&mut [f64])) {
    if std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>() {
        // SAFETY: T is f64, checked above.
        let v = unsafe { &mut *(v as *mut [T] as *mut [f64]) };
        f(v);
    } else {
        let mut buf: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
        f(&mut buf);
        v.iter_mut().zip(buf).for_each(|(x, b)| *x = T::of(b));
    }
}

/// `v ← sin(w0·v)` for any scalar type.
pub fn sin_in_place<T: crate::scalar::Real>(v: &mut [T], w0: f64) {
    with_f64(v, |v| sin_slice(v, w0));
}

/// `v ← sin(w0·v)`, `d ← w0·cos(w0·v)` for any scalar type.
pub fn sin_cos_in_place<T: crate::scalar::Real>(v: &mut [T], d: &mut [T], w0: f64) {
    with_f64(d, |dd| {
        with_f64(v, |vv| sin_cos_slice(vv, dd, w0));
    });
}
