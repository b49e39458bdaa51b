use crate::error::{Error, Result};
use crate::inr::MlpParams;
use crate::scalar::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every trainable tensor, in
/// [`MlpParams::tensors`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &MlpParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// State for a flat list of tensor lengths.
    pub fn with_lengths(lengths: &[usize]) -> Self {
        let zeros: Vec<Vec<T>> = lengths.iter().map(|&n| vec![T::zero(); n]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update on raw tensors.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("Adam state does not match parameter list".into()));
        }
        for (k, g) in grads.iter().enumerate() {
            if g.len() != self.m[k].len() || params[k].len() != g.len() {
                return Err(Error::Shape(format!("Adam tensor {k} length mismatch")));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient tensor {k} entry {i}")));
            }
        }
        self.step += 1;
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let c1 = T::one() - T::of(BETA1.powi(self.step as i32));
        let c2 = T::one() - T::of(BETA2.powi(self.step as i32));
        let (lr, eps) = (T::of(lr), T::of(EPSILON));
        for (k, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((p, &gi), mi), vi) in params[k].iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to `params` using `grads`.
pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut MlpParams<T>, grads: &MlpParams<T>, lr: f64) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.update(&mut p, &g, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::<f64>::with_lengths(&[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..5 {
            s.update(&mut [&mut p[..]], &[&[0.0; 3]], 1e-3).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::<f64>::with_lengths(&[3]);
        let mut p = vec![0.0; 3];
        let g = [0.5, -3.0, 1e-2];
        s.update(&mut [&mut p[..]], &[&g], 1e-3).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let want = -1e-3 * gi / (gi.abs() + EPSILON);
            assert!((pi - want).abs() < 1e-15);
            assert!((pi.abs() - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_converges() {
        // f(x) = (x - 3)^2, minimum at 3.
        let mut s = AdamState::<f64>::with_lengths(&[1]);
        let mut x = vec![-2.0];
        let mut steps = 0;
        for k in 0..5000 {
            let g = [2.0 * (x[0] - 3.0)];
            let lr = 0.1 * 0.5f64.powi((k / 500) as i32);
            s.update(&mut [&mut x[..]], &[&g], lr).unwrap();
            steps = k + 1;
            if (x[0] - 3.0).abs() < 1e-6 {
                break;
            }
        }
        assert!((x[0] - 3.0).abs() < 1e-6, "x = {} after {steps} steps", x[0]);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = AdamState::<f64>::with_lengths(&[2]);
        let mut p = vec![0.0; 2];
        let err = s.update(&mut [&mut p[..]], &[&[1.0, f64::NAN]], 1e-3).unwrap_err();
        assert!(err.to_string().contains("entry 1"));
        assert_eq!(s.step, 0);
    }
}
