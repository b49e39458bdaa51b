use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of coordinate dimensions: `(x, y, TSL)`.
pub const COORD_DIM: usize = 3;

/// Every `(v_x, v_y, v_TSL)` of an image series, normalized to `[-1, 1]`.
///
/// Row order matches [`ImageSeries`](crate::ImageSeries) storage: x fastest,
/// then y, then TSL.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordGrid<T> {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub coords: Array2<T>,
}

fn linspace_unit(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

impl<T: Real> CoordGrid<T> {
    /// The TSL axis is mapped linearly from `[min, max]` TSL to `[-1, 1]`.
    pub fn new(nx: usize, ny: usize, tsl_ms: &[f64]) -> Self {
        let nt = tsl_ms.len();
        let (lo, hi) = tsl_ms
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
        let vt: Vec<f64> = tsl_ms
            .iter()
            .map(|&t| if hi > lo { -1.0 + 2.0 * (t - lo) / (hi - lo) } else { 0.0 })
            .collect();
        let mut coords = Array2::zeros((nx * ny * nt, COORD_DIM));
        let mut row = 0;
        for &t in &vt {
            for y in 0..ny {
                let vy = linspace_unit(y, ny);
                for x in 0..nx {
                    coords[[row, 0]] = T::of(linspace_unit(x, nx));
                    coords[[row, 1]] = T::of(vy);
                    coords[[row, 2]] = T::of(t);
                    row += 1;
                }
            }
        }
        CoordGrid { nx, ny, nt, coords }
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }
}

/// Random Fourier features `γ(v) = [cos(2π Bᵀv), sin(2π Bᵀv)]`.
///
/// `B` is `3 × n_e` with i.i.d. `N(0, σ²)` entries and never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierEmbedding<T> {
    pub b: Array2<T>,
    pub sigma: f64,
}

impl<T: Real> FourierEmbedding<T> {
    pub fn new(n_e: usize, sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Invalid(format!("embedding sigma {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((COORD_DIM, n_e), |_| T::of(normal.sample(&mut rng)));
        Ok(FourierEmbedding { b, sigma })
    }

    pub fn n_e(&self) -> usize {
        self.b.ncols()
    }

    /// Output width `2·n_e`.
    pub fn dim(&self) -> usize {
        2 * self.b.ncols()
    }

    pub fn embed(&self, v: [T; COORD_DIM]) -> Vec<T> {
        let coords = Array2::from_shape_vec((1, COORD_DIM), v.to_vec()).expect("1x3");
        self.embed_batch(coords.view()).into_raw_vec_and_offset().0
    }

    /// Embeds every row of `coords` (`N × 3`) into an `N × 2n_e` matrix.
    pub fn embed_batch(&self, coords: ArrayView2<T>) -> Array2<T> {
        let n_e = self.n_e();
        let proj = coords.dot(&self.b) * T::TAU();
        let mut out = Array2::zeros((coords.nrows(), 2 * n_e));
        for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(proj.axis_iter(Axis(0))) {
            for (j, &p) in src.iter().enumerate() {
                let (s, c) = p.sin_cos();
                dst[j] = c;
                dst[n_e + j] = s;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_embeds_to_ones_then_zeros() {
        let e = FourierEmbedding::<f64>::new(16, 1.0, 3).unwrap();
        let v = e.embed([0.0, 0.0, 0.0]);
        assert_eq!(v.len(), 32);
        assert!(v[..16].iter().all(|&c| c == 1.0));
        assert!(v[16..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn range_and_pythagoras() {
        let e = FourierEmbedding::<f64>::new(32, 2.0, 1).unwrap();
        let grid = CoordGrid::<f64>::new(7, 5, &[1.0, 20.0, 40.0]);
        let emb = e.embed_batch(grid.coords.view());
        for row in emb.axis_iter(Axis(0)) {
            for j in 0..32 {
                let (c, s) = (row[j], row[32 + j]);
                assert!(c.abs() <= 1.0 && s.abs() <= 1.0);
                assert!((c * c + s * s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_order_and_range() {
        let g = CoordGrid::<f64>::new(4, 3, &[1.0, 20.0, 80.0]);
        assert_eq!(g.len(), 36);
        assert!(g.coords.iter().all(|v| v.abs() <= 1.0));
        // x fastest, then y, then TSL.
        assert_eq!(g.coords.row(1).to_vec(), vec![-1.0 + 2.0 / 3.0, -1.0, -1.0]);
        assert_eq!(g.coords.row(4).to_vec(), vec![-1.0, 0.0, -1.0]);
        assert_eq!(g.coords.row(35).to_vec(), vec![1.0, 1.0, 1.0]);
        let t1 = g.coords[[12, 2]];
        assert!((t1 - (-1.0 + 2.0 * 19.0 / 79.0)).abs() < 1e-15);
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = FourierEmbedding::<f64>::new(8, 1.0, 5).unwrap();
        let b = FourierEmbedding::<f64>::new(8, 1.0, 5).unwrap();
        assert_eq!(a, b);
    }
}
