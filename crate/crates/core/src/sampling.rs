//! Golden-ratio Cartesian undersampling of phase-encode lines with a fully
//! sampled autocalibration (ACS) centre and a different pattern per TSL.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor_io::{first_fastest_to_row_major, row_major_to_first_fastest, Tensor};

/// `(√5 − 1) / 2`, the golden-ratio increment.
pub const GOLDEN_STEP: f64 = 0.618_033_988_749_894_8;

/// Phase-encode line mask, index `y + ny·t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub ny: usize,
    pub nt: usize,
    pub acs: usize,
    pub nominal_r: f64,
    pub lines: Vec<bool>,
}

/// First ACS line: the block of `acs` lines around `ny / 2`.
pub fn acs_start(ny: usize, acs: usize) -> usize {
    (ny / 2).saturating_sub(acs / 2)
}

impl SamplingMask {
    pub fn full(ny: usize, nt: usize) -> Self {
        SamplingMask {
            ny,
            nt,
            acs: ny,
            nominal_r: 1.0,
            lines: vec![true; ny * nt],
        }
    }

    #[inline]
    pub fn is_sampled(&self, y: usize, t: usize) -> bool {
        self.lines[y + self.ny * t]
    }

    pub fn column(&self, t: usize) -> &[bool] {
        &self.lines[t * self.ny..(t + 1) * self.ny]
    }

    pub fn sampled_lines(&self) -> usize {
        self.lines.iter().filter(|&&b| b).count()
    }

    pub fn acs_range(&self) -> std::ops::Range<usize> {
        let s = acs_start(self.ny, self.acs);
        s..s + self.acs
    }

    /// Broadcast over readout and coils; index `x + nx·(y + ny·(c + nc·t))`.
    pub fn expand(&self, nx: usize, nc: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(nx * self.ny * nc * self.nt);
        for t in 0..self.nt {
            for _c in 0..nc {
                for y in 0..self.ny {
                    let s = self.is_sampled(y, t);
                    out.extend(std::iter::repeat_n(s, nx));
                }
            }
        }
        out
    }

    /// Real {0, 1} tensor with logical dims `[N_y, N_TSL]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let dims = vec![self.ny, self.nt];
        let data: Vec<f32> = self.lines.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Tensor::real(dims.clone(), first_fastest_to_row_major(&data, &dims))
    }

    pub fn from_tensor(t: &Tensor, acs: usize, nominal_r: f64) -> Result<Self> {
        if t.dims.len() != 2 {
            return Err(Error::Shape(format!("mask needs 2 dims, got {:?}", t.dims)));
        }
        let vals = row_major_to_first_fastest(t.as_real()?, &t.dims);
        if vals.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invalid("mask tensor must hold only 0 and 1".into()));
        }
        Ok(SamplingMask {
            ny: t.dims[0],
            nt: t.dims[1],
            acs,
            nominal_r,
            lines: vals.into_iter().map(|v| v == 1.0).collect(),
        })
    }
}

/// Builds the per-TSL line masks.
///
/// Each TSL column receives `B = round(ny / R)` lines: the `acs` centre lines,
/// then lines picked by the golden-ratio sequence `u ← frac(u + GOLDEN_STEP)`
/// mapped to `round(u · (ny − 1))`, skipping lines already taken. TSL `t`
/// starts its sequence `t · (B − acs)` steps after a seeded offset, so
/// consecutive TSLs interleave.
pub fn make_mask(ny: usize, r: f64, acs: usize, nt: usize, seed: u64) -> Result<SamplingMask> {
    if ny == 0 || nt == 0 {
        return Err(Error::Invalid("mask needs ny >= 1 and nt >= 1".into()));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::Invalid(format!("acceleration must be >= 1, got {r}")));
    }
    let budget = ((ny as f64 / r).round() as usize).clamp(1, ny);
    if acs > budget {
        return Err(Error::AcsExceedsBudget { acs, budget });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: f64 = rng.random();
    let outer = budget - acs;
    let start = acs_start(ny, acs);

    let mut lines = vec![false; ny * nt];
    for t in 0..nt {
        let col = &mut lines[t * ny..(t + 1) * ny];
        for l in col.iter_mut().skip(start).take(acs) {
            *l = true;
        }
        let mut taken = acs;
        let mut u = (base + (t * outer) as f64 * GOLDEN_STEP).fract();
        // The sequence is dense in [0, 1), so every line is eventually hit;
        // the cap only guards against pathological rounding.
        let mut steps = 0usize;
        while taken < budget && steps < 64 * ny {
            let line = (u * (ny - 1) as f64).round() as usize;
            if !col[line] {
                col[line] = true;
                taken += 1;
            }
            u = (u + GOLDEN_STEP).fract();
            steps += 1;
        }
        // Deterministic fill from the centre outwards if the cap was hit.
        let mut offset = 0usize;
        while taken < budget {
            for line in [ny / 2 + offset, (ny / 2).wrapping_sub(offset + 1)] {
                if line < ny && !col[line] && taken < budget {
                    col[line] = true;
                    taken += 1;
                }
            }
            offset += 1;
        }
    }
    Ok(SamplingMask {
        ny,
        nt,
        acs,
        nominal_r: r,
        lines,
    })
}

/// `(ny · nt) / sampled lines`.
pub fn net_acceleration(mask: &SamplingMask) -> Result<f64> {
    let sampled = mask.sampled_lines();
    if sampled == 0 {
        return Err(Error::Invalid("all-zero sampling mask".into()));
    }
    Ok((mask.ny * mask.nt) as f64 / sampled as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r1_is_full() {
        let m = make_mask(32, 1.0, 4, 3, 0).unwrap();
        assert!(m.lines.iter().all(|&b| b));
        assert_eq!(net_acceleration(&m).unwrap(), 1.0);
    }

    #[test]
    fn budget_and_acs() {
        let m = make_mask(64, 4.0, 8, 5, 1).unwrap();
        for t in 0..5 {
            let col = m.column(t);
            assert_eq!(col.iter().filter(|&&b| b).count(), 16);
            assert!(col[28..36].iter().all(|&b| b));
        }
        assert_eq!(m.acs_range(), 28..36);
    }

    #[test]
    fn paper_scale_acceleration() {
        let m = make_mask(384, 6.0, 24, 5, 9).unwrap();
        for t in 0..5 {
            assert_eq!(m.column(t).iter().filter(|&&b| b).count(), 64);
        }
        let r = net_acceleration(&m).unwrap();
        assert!((r - 6.0).abs() <= 0.1, "{r}");
    }

    #[test]
    fn acs_over_budget() {
        let err = make_mask(64, 8.0, 10, 2, 0).unwrap_err();
        assert!(err.to_string().contains("ACS exceeds budget"));
    }

    #[test]
    fn masks_differ_across_tsl() {
        let m = make_mask(64, 4.0, 8, 5, 3).unwrap();
        for a in 0..5 {
            for b in a + 1..5 {
                assert_ne!(m.column(a), m.column(b), "TSL {a} and {b} share a mask");
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_mask(96, 5.0, 6, 4, 17).unwrap(), make_mask(96, 5.0, 6, 4, 17).unwrap());
    }

    #[test]
    fn half_sampled() {
        let mut m = SamplingMask::full(10, 2);
        for t in 0..2 {
            for y in 0..5 {
                m.lines[y + 10 * t] = false;
            }
        }
        assert_eq!(net_acceleration(&m).unwrap(), 2.0);
        m.lines.iter_mut().for_each(|b| *b = false);
        assert!(net_acceleration(&m).is_err());
    }

    #[test]
    fn expand_counts() {
        let mut m = SamplingMask::full(8, 2);
        m.lines.iter_mut().for_each(|b| *b = false);
        m.lines[3] = true;
        m.lines[8 + 5] = true;
        let e = m.expand(6, 3);
        assert_eq!(e.len(), 6 * 8 * 3 * 2);
        let per_t = 6 * 8 * 3;
        assert_eq!(e[..per_t].iter().filter(|&&b| b).count(), 6 * 3);
        assert_eq!(e[per_t..].iter().filter(|&&b| b).count(), 6 * 3);
        assert_eq!(e, m.expand(6, 3));
    }
}
