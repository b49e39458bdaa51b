//! Image quality metrics: NRMSE, PSNR and SSIM.

use num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::phantom::ImageSeries;
use crate::scalar::Real;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("metric inputs have {a} and {b} elements")));
    }
    if a == 0 {
        return Err(Error::EmptyTensor);
    }
    Ok(())
}

/// `‖x - ref‖ / ‖ref‖` for real data.
pub fn nrmse(x: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(x.len(), reference.len())?;
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Invalid("NRMSE reference has zero norm".into()));
    }
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// `‖x - ref‖ / ‖ref‖` for complex data.
pub fn nrmse_complex<T: Real>(x: &[Complex<T>], reference: &[Complex<T>]) -> Result<f64> {
    check_len(x.len(), reference.len())?;
    let den: f64 = reference.iter().map(|v| v.norm_sqr().as_f64()).sum();
    if den == 0.0 {
        return Err(Error::Invalid("NRMSE reference has zero norm".into()));
    }
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr().as_f64()).sum();
    Ok((num / den).sqrt())
}

/// NRMSE restricted to `mask`.
pub fn nrmse_masked(x: &[f64], reference: &[f64], mask: &[bool]) -> Result<f64> {
    check_len(x.len(), reference.len())?;
    check_len(x.len(), mask.len())?;
    let (a, b): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(reference)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&a, &b), _)| (a, b))
        .unzip();
    nrmse(&a, &b)
}

/// `10·log10(max(ref)² / MSE)` on magnitude images; `+∞` when identical.
pub fn psnr(x: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(x.len(), reference.len())?;
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let h = (SSIM_WINDOW / 2) as f64;
    (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - h;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect()
}

/// Mean SSIM of two `w × h` real images (index `x + w·y`) with a separable
/// Gaussian window; windows truncated at the borders are renormalized.
/// Dynamic range is `max |ref|`.
pub fn ssim(x: &[f64], reference: &[f64], w: usize, h: usize) -> Result<f64> {
    check_len(x.len(), reference.len())?;
    check_len(x.len(), w * h)?;
    let l = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if l == 0.0 {
        let same = x.iter().zip(reference).all(|(a, b)| a == b);
        return Ok(if same { 1.0 } else { 0.0 });
    }
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let g = gaussian_window();
    let half = (SSIM_WINDOW / 2) as isize;
    let fields: [Vec<f64>; 5] = [
        x.to_vec(),
        reference.to_vec(),
        x.iter().map(|v| v * v).collect(),
        reference.iter().map(|v| v * v).collect(),
        x.iter().zip(reference).map(|(a, b)| a * b).collect(),
    ];
    // Separable filtering of each field and of the constant 1 (for the
    // truncated-window normalization).
    let blur = |f: &[f64]| -> Vec<f64> {
        let mut tmp = vec![0.0; w * h];
        for yy in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for (k, gk) in g.iter().enumerate() {
                    let sx = xx as isize + k as isize - half;
                    if sx >= 0 && (sx as usize) < w {
                        s += gk * f[yy * w + sx as usize];
                    }
                }
                tmp[yy * w + xx] = s;
            }
        }
        let mut out = vec![0.0; w * h];
        for yy in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for (k, gk) in g.iter().enumerate() {
                    let sy = yy as isize + k as isize - half;
                    if sy >= 0 && (sy as usize) < h {
                        s += gk * tmp[sy as usize * w + xx];
                    }
                }
                out[yy * w + xx] = s;
            }
        }
        out
    };
    let norm = blur(&vec![1.0; w * h]);
    let [mx, my, mxx, myy, mxy] = fields.map(|f| blur(&f));
    let mut total = 0.0;
    for i in 0..w * h {
        let z = norm[i];
        let (ux, uy) = (mx[i] / z, my[i] / z);
        let sxx = mxx[i] / z - ux * ux;
        let syy = myy[i] / z - uy * uy;
        let sxy = mxy[i] / z - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * sxy + c2)) / ((ux * ux + uy * uy + c1) * (sxx + syy + c2));
    }
    Ok(total / (w * h) as f64)
}

/// Serde adapter writing non-finite values as `"inf"`, `"-inf"` or `"nan"`.
pub mod finite_or_tag {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("unknown metric tag {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    #[serde(with = "finite_or_tag")]
    pub psnr: f64,
    pub ssim: f64,
    pub nrmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub tsl_ms: f64,
    #[serde(flatten)]
    pub metrics: ImageMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// What the images were compared against.
    pub reference: String,
    pub per_tsl: Vec<FrameMetrics>,
    /// PSNR and NRMSE over the whole series, SSIM averaged over frames.
    pub aggregate: ImageMetrics,
    /// T1ρ map NRMSE inside the support mask, when maps were compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1rho_nrmse: Option<f64>,
}

/// PSNR and SSIM on magnitudes, NRMSE on complex values.
pub fn compare_series<T: Real>(x: &ImageSeries<T>, reference: &ImageSeries<T>, label: &str) -> Result<MetricsReport> {
    if !x.same_shape(reference) {
        return Err(Error::Shape("series to compare differ in shape".into()));
    }
    let mut per_tsl = Vec::with_capacity(x.nt());
    let mut ssim_sum = 0.0;
    for t in 0..x.nt() {
        let (a, b) = (x.frame_magnitude(t), reference.frame_magnitude(t));
        let m = ImageMetrics {
            psnr: psnr(&a, &b)?,
            ssim: ssim(&a, &b, x.nx, x.ny)?,
            nrmse: nrmse_complex(x.frame(t), reference.frame(t))?,
        };
        ssim_sum += m.ssim;
        per_tsl.push(FrameMetrics {
            tsl_ms: x.tsl_ms[t],
            metrics: m,
        });
    }
    let aggregate = ImageMetrics {
        psnr: psnr(&x.magnitude(), &reference.magnitude())?,
        ssim: ssim_sum / x.nt() as f64,
        nrmse: nrmse_complex(&x.data, &reference.data)?,
    };
    Ok(MetricsReport {
        reference: label.into(),
        per_tsl,
        aggregate,
        t1rho_nrmse: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn nrmse_examples() {
        let r = random(50, 1);
        assert_eq!(nrmse(&r, &r).unwrap(), 0.0);
        let x: Vec<f64> = r.iter().map(|v| 0.9 * v).collect();
        assert!((nrmse(&x, &r).unwrap() - 0.1).abs() < 1e-12);
        let y = random(50, 2);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..50 {
            num += (y[i] - r[i]).powi(2);
            den += r[i].powi(2);
        }
        assert!((nrmse(&y, &r).unwrap() - (num / den).sqrt()).abs() < 1e-12);
        assert!(nrmse(&r, &[0.0; 50]).is_err());
    }

    #[test]
    fn psnr_examples() {
        let r = vec![0.0, 10.0, 5.0, 5.0];
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        // MSE = 100/100 = 1 → 20 dB.
        let x = vec![1.0, 11.0, 4.0, 6.0];
        assert!((psnr(&x, &r).unwrap() - 20.0).abs() < 1e-12);
        let x2 = vec![2.0, 12.0, 3.0, 7.0];
        let drop = psnr(&x, &r).unwrap() - psnr(&x2, &r).unwrap();
        assert!((drop - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_scaling() {
        let r = random(24 * 20, 3);
        assert!((ssim(&r, &r, 24, 20).unwrap() - 1.0).abs() < 1e-12);
        let x = random(24 * 20, 4);
        let s = ssim(&x, &r, 24, 20).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let rs: Vec<f64> = r.iter().map(|v| v * 3.0).collect();
        assert!((ssim(&xs, &rs, 24, 20).unwrap() - s).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn infinite_psnr_serializes_as_tag() {
        let m = ImageMetrics {
            psnr: f64::INFINITY,
            ssim: 1.0,
            nrmse: 0.0,
        };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ImageMetrics = serde_json::from_str(&s).unwrap();
        assert_eq!(back.psnr, f64::INFINITY);
    }
}
