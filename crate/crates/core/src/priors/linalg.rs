//! Small dense complex matrices: one-sided Jacobi SVD and Cholesky solves.

use num_complex::Complex;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i).conj())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> T {
        crate::scalar::norm2(&self.data)
    }
}

/// Thin SVD `A = U diag(s) Vᴴ` of an `m × n` matrix with `m ≥ n`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// `m × n`, orthonormal columns where `s > 0`.
    pub u: CMat<T>,
    /// Singular values in descending order.
    pub s: Vec<T>,
    /// `n × n` unitary.
    pub v: CMat<T>,
}

const MAX_SWEEPS: usize = 60;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of `A` are rotated pairwise until mutually orthogonal; their norms
/// are the singular values and the accumulated rotations form `V`.
pub fn svd<T: Real>(a: &CMat<T>) -> Result<Svd<T>> {
    if a.rows < a.cols {
        // Wide input: factor the adjoint and swap the roles of U and V.
        let t = svd(&a.adjoint())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    if a.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("SVD input".into()));
    }
    let (m, n) = (a.rows, a.cols);
    // Work column-major for cheap column access.
    let mut cols: Vec<Vec<Complex<T>>> = (0..n).map(|j| (0..m).map(|i| a.at(i, j)).collect()).collect();
    let mut v: Vec<Vec<Complex<T>>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| Complex::new(if i == j { T::one() } else { T::zero() }, T::zero()))
                .collect()
        })
        .collect();
    let tol = T::epsilon() * T::of(m as f64);
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: T = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: T = cols[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex<T> = cols[p]
                    .iter()
                    .zip(&cols[q])
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y);
                let g = gamma.norm();
                if g == T::zero() || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Phase-align column q so the 2×2 Gram block is real.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (T::of(2.0) * g);
                let t = Float::signum(zeta) / (Float::abs(zeta) + (T::one() + zeta * zeta).sqrt());
                let t = if zeta == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let phase_conj = phase.conj();
                let (cp, cq) = split_pair(&mut cols, p, q);
                for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
                    let aq = *xq * phase_conj;
                    let ap = *xp;
                    *xp = ap * c - aq * s;
                    *xq = ap * s + aq * c;
                }
                let (vp, vq) = split_pair(&mut v, p, q);
                for (xp, xq) in vp.iter_mut().zip(vq.iter_mut()) {
                    let aq = *xq * phase_conj;
                    let ap = *xp;
                    *xp = ap * c - aq * s;
                    *xq = ap * s + aq * c;
                }
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence(MAX_SWEEPS));
    }
    let norms: Vec<T> = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut u = CMat::zeros(m, n);
    let mut vm = CMat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        for i in 0..m {
            *u.at_mut(i, k) = if sigma > T::zero() {
                cols[j][i] / sigma
            } else {
                Complex::new(T::zero(), T::zero())
            };
        }
        for i in 0..n {
            *vm.at_mut(i, k) = v[j][i];
        }
    }
    Ok(Svd { u, s, v: vm })
}

fn split_pair<X>(v: &mut [X], p: usize, q: usize) -> (&mut X, &mut X) {
    debug_assert!(p < q);
    let (a, b) = v.split_at_mut(q);
    (&mut a[p], &mut b[0])
}

/// Solves `A x = b` for Hermitian positive definite `A` (`n × n`, row-major).
pub fn cholesky_solve<T: Real>(a: &CMat<T>, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    // Lower factor L with A = L Lᴴ.
    let mut l = CMat::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = a.at(j, j).re;
        for k in 0..j {
            d -= l.at(j, k).norm_sqr();
        }
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        *l.at_mut(j, j) = Complex::new(djj, T::zero());
        for i in j + 1..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k).conj();
            }
            *l.at_mut(i, j) = s / djj;
        }
    }
    // Forward: L y = b.
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.at(i, k) * y[k];
        }
        y[i] = s / l.at(i, i).re;
    }
    // Backward: Lᴴ x = y.
    let mut x = y;
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l.at(k, i).conj() * x[k];
        }
        x[i] = s / l.at(i, i).re;
    }
    Ok(x)
}
