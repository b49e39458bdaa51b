use approx::assert_relative_eq;
use num_complex::{Complex, Complex32};
use proptest::prelude::*;
use t1rho_inr::encoding::Fft2c;
use t1rho_inr::metrics::nrmse;
use t1rho_inr::priors::hankel::{hankel_adjoint, hankel_build, nuclear_norm_and_subgrad, HankelConfig};
use t1rho_inr::priors::linalg::{svd, CMat};
use t1rho_inr::qmap::fit_pixel;
use t1rho_inr::sampling::{acs_start, make_mask};
use t1rho_inr::scalar::{inner, norm2};
use t1rho_inr::tensor_io::{Tensor, TensorData};

type C = Complex<f64>;

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C::new(re, im)), n)
}

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_bytes_round_trip(dims in dims(), kind in 0u8..3, seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let val = |i: usize| ((seed as f64 + i as f64 * 0.37).sin() * 1e3) as f32;
        let data = match kind {
            0 => TensorData::Complex((0..n).map(|i| Complex32::new(val(i), val(i + n))).collect()),
            1 => TensorData::Real((0..n).map(val).collect()),
            _ => TensorData::Real64((0..n).map(|i| val(i) as f64 / 7.0).collect()),
        };
        let t = Tensor::new(dims, data).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn truncated_bytes_are_rejected(dims in dims(), cut in 1usize..16) {
        let n: usize = dims.iter().product();
        let t = Tensor::new(dims, TensorData::Real(vec![1.5; n])).unwrap();
        let bytes = t.to_bytes().unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(Tensor::from_bytes(&bytes[..keep]).is_err());
    }

    #[test]
    fn fft_is_unitary((nx, ny, x) in (1usize..9, 1usize..9).prop_flat_map(|(nx, ny)| (Just(nx), Just(ny), complex_vec(nx * ny)))) {
        let f = Fft2c::<f64>::new(nx, ny);
        let k = f.forward(&x);
        assert_relative_eq!(norm2(&k), norm2(&x), max_relative = 1e-12);
        let back = f.inverse(&k);
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn hankel_adjoint_identity((n, s, g) in (2usize..12).prop_flat_map(|n| {
        let c = HankelConfig::new(n).unwrap();
        (Just(n), complex_vec(n), complex_vec(c.rows * c.cols))
    })) {
        let cfg = HankelConfig::new(n).unwrap();
        prop_assert_eq!(cfg.rows + cfg.cols, n + 1);
        let g = CMat { rows: cfg.rows, cols: cfg.cols, data: g };
        let hs = hankel_build(&s, &cfg).unwrap();
        let lhs = inner(&hs.data, &g.data);
        let rhs = inner(&s, &hankel_adjoint(&g, &cfg).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn svd_reconstructs_and_bounds_nuclear_norm((m, n, a) in (1usize..7, 1usize..7).prop_flat_map(|(m, n)| (Just(m), Just(n), complex_vec(m * n)))) {
        let a = CMat { rows: m, cols: n, data: a };
        let d = svd(&a).unwrap();
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let k = d.s.len();
        let rebuilt = CMat::from_fn(m, n, |i, j| (0..k).map(|r| d.u.at(i, r) * d.s[r] * d.v.at(j, r).conj()).sum());
        for (x, y) in rebuilt.data.iter().zip(&a.data) {
            prop_assert!((x - y).norm() < 1e-10);
        }
        let (nuc, _) = nuclear_norm_and_subgrad(&a).unwrap();
        let fro = a.frobenius();
        prop_assert!(nuc >= fro - 1e-12);
        prop_assert!(nuc <= (m.min(n) as f64).sqrt() * fro + 1e-12);
    }

    #[test]
    fn masks_hold_acs_and_exact_budget(ny in 16usize..96, r in 1.0f64..6.0, acs in 0usize..8, nt in 1usize..6, seed in any::<u64>()) {
        let budget = ((ny as f64 / r).round() as usize).clamp(1, ny);
        prop_assume!(acs <= budget);
        let m = make_mask(ny, r, acs, nt, seed).unwrap();
        let start = acs_start(ny, acs);
        for t in 0..nt {
            prop_assert_eq!(m.column(t).iter().filter(|&&b| b).count(), budget);
            prop_assert!((start..start + acs).all(|y| m.is_sampled(y, t)));
        }
        prop_assert_eq!(make_mask(ny, r, acs, nt, seed).unwrap(), m);
    }

    #[test]
    fn noiseless_decay_is_recovered(m0 in 0.1f64..10.0, t1rho in 5.0f64..200.0) {
        let tsl = [1.0, 20.0, 40.0, 60.0, 80.0];
        let m: Vec<f64> = tsl.iter().map(|&t: &f64| m0 * (-t / t1rho).exp()).collect();
        let fit = fit_pixel(&m, &tsl, [1.0, 1000.0]);
        assert_relative_eq!(fit.m0, m0, max_relative = 1e-8);
        assert_relative_eq!(fit.t1rho_ms, t1rho, max_relative = 1e-8);
    }

    #[test]
    fn nrmse_of_scaled_copy(x in prop::collection::vec(0.01f64..1.0, 1..200), a in 0.0f64..2.0) {
        let y: Vec<f64> = x.iter().map(|v| a * v).collect();
        assert_relative_eq!(nrmse(&y, &x).unwrap(), (1.0 - a).abs(), epsilon = 1e-12);
    }
}
