use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t1rho_inr::config::{DcGradient, KernelSpec, Mode};
use t1rho_inr::encoding::{apply_mask, Encoder, KtData};
use t1rho_inr::inr::{InitScheme, MlpArch, MlpParams};
use t1rho_inr::phantom::{make_coil_maps, CoilMaps, ImageSeries};
use t1rho_inr::sampling::{make_mask, SamplingMask};
use t1rho_inr::scalar::re_inner;
use t1rho_inr::trainer::{
    dc_projection, image_loss, loss_dc, reconstruct, total_loss, LossWeights, Problem, TrainOptions,
};
use t1rho_inr::{ExperimentConfig, SpiritKernel};

type C = Complex<f64>;

fn rnd(rng: &mut ChaCha8Rng) -> C {
    C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

struct Micro {
    encoder: Encoder<f64>,
    mask: SamplingMask,
    y: KtData<f64>,
    kernel: SpiritKernel<f64>,
    tsl: Vec<f64>,
}

fn micro() -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (nx, ny, nc) = (8, 8, 2);
    let tsl = vec![1.0, 20.0, 40.0];
    let coils = make_coil_maps::<f64>(nx, ny, nc, 3).unwrap();
    let encoder = Encoder::new(coils).unwrap();
    let mask = make_mask(ny, 2.0, 2, tsl.len(), 9).unwrap();
    let mut y = KtData::zeros(nx, ny, nc, tsl.len());
    y.data.iter_mut().for_each(|z| *z = rnd(&mut rng));
    let y = apply_mask(&y, &mask).unwrap();
    let spec = KernelSpec { wx: 3, wy: 3, wt: 3, tau: 0.0 };
    let mut kernel = SpiritKernel::zeros(spec, nc, tsl.len()).unwrap();
    kernel.weights.iter_mut().for_each(|z| *z = rnd(&mut rng) * 0.2);
    kernel.enforce_constraints();
    Micro { encoder, mask, y, kernel, tsl }
}

fn small_arch() -> MlpArch {
    MlpArch {
        n_e: 4,
        hidden: 6,
        depth: 4,
        skips: vec![2],
        omega0: 3.0,
    }
}

fn perturbed(p: &MlpParams<f64>, dir: &[Vec<f64>], s: f64) -> MlpParams<f64> {
    let mut q = p.clone();
    for (t, d) in q.tensors_mut().into_iter().zip(dir) {
        t.iter_mut().zip(d).for_each(|(a, b)| *a += s * b);
    }
    q
}

#[test]
fn loss_dc_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut y = KtData::<f64>::zeros(4, 4, 1, 2);
    y.data.iter_mut().for_each(|z| *z = rnd(&mut rng));
    let (same, g) = loss_dc(&y, &y, DcGradient::Frozen).unwrap();
    assert_eq!(same.dc, 0.0);
    assert!(g.data.iter().all(|z| z.norm() == 0.0));
    let mut twice = y.clone();
    twice.data.iter_mut().for_each(|z| *z *= 2.0);
    assert!((loss_dc(&twice, &y, DcGradient::Frozen).unwrap().0.dc - 0.5).abs() < 1e-15);
    let zero = KtData::<f64>::zeros(4, 4, 1, 2);
    let err = loss_dc(&zero, &y, DcGradient::Frozen).unwrap_err();
    assert!(err.to_string().contains("degenerate prediction"));
}

#[test]
fn loss_dc_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut y = KtData::<f64>::zeros(5, 4, 2, 2);
    y.data.iter_mut().for_each(|z| *z = rnd(&mut rng));
    let mut pred = y.clone();
    pred.data.iter_mut().for_each(|z| *z = rnd(&mut rng));
    let dir: Vec<C> = pred.data.iter().map(|_| rnd(&mut rng)).collect();
    let h = 1e-7;
    let shifted = |s: f64| {
        let mut p = pred.clone();
        p.data.iter_mut().zip(&dir).for_each(|(a, b)| *a += b * s);
        loss_dc(&p, &y, DcGradient::Frozen).unwrap().0
    };
    let d0 = loss_dc(&pred, &y, DcGradient::Frozen).unwrap().0.dc_denominator;

    let (_, g) = loss_dc(&pred, &y, DcGradient::Frozen).unwrap();
    let fd = (shifted(h).dc_numerator - shifted(-h).dc_numerator) / (2.0 * h * d0);
    let an = re_inner(&g.data, &dir);
    assert!((fd - an).abs() <= 1e-5 * an.abs(), "frozen: fd {fd} an {an}");

    let (_, g) = loss_dc(&pred, &y, DcGradient::Quotient).unwrap();
    let fd = (shifted(h).dc - shifted(-h).dc) / (2.0 * h);
    let an = re_inner(&g.data, &dir);
    assert!((fd - an).abs() <= 1e-5 * an.abs(), "quotient: fd {fd} an {an}");
}

#[test]
fn total_loss_gradient_matches_finite_differences_in_every_mode() {
    let m = micro();
    let params = MlpParams::<f64>::init(&small_arch(), 1.0, 5, InitScheme::Standard).unwrap();
    let problem = Problem::new(&m.encoder, &m.y, &m.mask, Some(&m.kernel), &m.tsl, &params.embedding).unwrap();
    let weights = LossWeights::new(0.7, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for grad_mode in [DcGradient::Frozen, DcGradient::Quotient] {
        for mode in Mode::ALL {
            let (terms, grads) = total_loss(&params, &problem, weights, mode, grad_mode).unwrap();
            // Frozen gradients are checked against the objective with the
            // denominator held at its current value.
            let d0 = terms.dc_denominator;
            let objective = |p: &MlpParams<f64>| {
                let t = image_loss(&problem.predict(p).unwrap(), &problem, weights, mode, grad_mode, false)
                    .unwrap()
                    .0;
                match grad_mode {
                    DcGradient::Frozen => t.total - t.dc + t.dc_numerator / d0,
                    DcGradient::Quotient => t.total,
                }
            };
            for _ in 0..3 {
                let dir: Vec<Vec<f64>> = params
                    .tensors()
                    .iter()
                    .map(|t| t.iter().map(|_| rng.random::<f64>() - 0.5).collect())
                    .collect();
                let h = 1e-6;
                let fd = (objective(&perturbed(&params, &dir, h)) - objective(&perturbed(&params, &dir, -h))) / (2.0 * h);
                let an: f64 = grads
                    .tensors()
                    .iter()
                    .zip(&dir)
                    .map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
                    .sum();
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1e-8),
                    "{mode:?}/{grad_mode:?}: fd {fd} an {an}"
                );
            }
        }
    }
}

#[test]
fn mode_semantics() {
    let m = micro();
    let params = MlpParams::<f64>::init(&small_arch(), 1.0, 5, InitScheme::Standard).unwrap();
    let problem = Problem::new(&m.encoder, &m.y, &m.mask, Some(&m.kernel), &m.tsl, &params.embedding).unwrap();
    let heavy = LossWeights::new(5.0, 9.0).unwrap();
    let zero = LossWeights::new(0.0, 0.0).unwrap();
    let (dc, gdc) = total_loss(&params, &problem, heavy, Mode::Dc, DcGradient::Frozen).unwrap();
    assert_eq!(dc.total, dc.dc);
    assert_eq!((dc.hk, dc.sc), (0.0, 0.0));
    let (full0, gfull0) = total_loss(&params, &problem, zero, Mode::Full, DcGradient::Frozen).unwrap();
    assert_eq!(full0.total, dc.total);
    assert_eq!(gfull0.tensors(), gdc.tensors());

    let no_kernel = Problem::new(&m.encoder, &m.y, &m.mask, None, &m.tsl, &params.embedding).unwrap();
    for mode in [Mode::Sc, Mode::Full] {
        let err = total_loss(&params, &no_kernel, heavy, mode, DcGradient::Frozen).err().unwrap();
        assert!(err.to_string().contains("missing self-consistency kernel"));
    }
    assert!(total_loss(&params, &no_kernel, heavy, Mode::Hk, DcGradient::Frozen).is_ok());
}

fn random_series(nx: usize, ny: usize, tsl: &[f64], rng: &mut ChaCha8Rng) -> ImageSeries<f64> {
    let mut x = ImageSeries::zeros(nx, ny, tsl.to_vec());
    x.data.iter_mut().for_each(|z| *z = rnd(rng));
    x
}

/// Single coil with unit-modulus sensitivity: the only geometry in which the
/// encoding is unitary and the projection reproduces the samples exactly.
fn unitary_setup(rng: &mut ChaCha8Rng) -> (Encoder<f64>, SamplingMask, KtData<f64>, Vec<f64>) {
    let (nx, ny) = (8, 8);
    let tsl = vec![1.0, 20.0, 40.0];
    let phase: Vec<C> = (0..nx * ny).map(|_| C::from_polar(1.0, rng.random::<f64>() * 6.0)).collect();
    let coils = CoilMaps { nx, ny, nc: 1, data: phase };
    let encoder = Encoder::new(coils).unwrap();
    let mask = make_mask(ny, 2.0, 2, tsl.len(), 4).unwrap();
    let mut y = KtData::zeros(nx, ny, 1, tsl.len());
    y.data.iter_mut().for_each(|z| *z = rnd(rng));
    let y = apply_mask(&y, &mask).unwrap();
    (encoder, mask, y, tsl)
}

#[test]
fn dc_projection_reproduces_samples_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let (enc, mask, y, tsl) = unitary_setup(&mut rng);
        let pred = random_series(8, 8, &tsl, &mut rng);
        let x = dc_projection(&pred, &y, &mask, &enc).unwrap();
        let re = enc.forward(&x, &mask).unwrap();
        for (a, b) in re.data.iter().zip(&y.data) {
            assert!((a - b).norm() < 1e-10);
        }
        let twice = dc_projection(&x, &y, &mask, &enc).unwrap();
        for (a, b) in twice.data.iter().zip(&x.data) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}

#[test]
fn dc_projection_multicoil_fixed_point_and_zero_fill() {
    let m = micro();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let zf = m.encoder.adjoint_full(&m.y).unwrap();
    let zero = ImageSeries::zeros(8, 8, m.tsl.clone());
    let from_zero = dc_projection(&zero, &m.y, &m.mask, &m.encoder).unwrap();
    for (a, b) in from_zero.data.iter().zip(&zf.data) {
        assert!((a - b).norm() < 1e-12);
    }
    let pred = random_series(8, 8, &m.tsl, &mut rng);
    let consistent = m.encoder.forward(&pred, &m.mask).unwrap();
    let fixed = dc_projection(&pred, &consistent, &m.mask, &m.encoder).unwrap();
    for (a, b) in fixed.data.iter().zip(&pred.data) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn fully_sampled_reconstruction_equals_adjoint() {
    let m = micro();
    let full = SamplingMask::full(8, m.tsl.len());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut y = KtData::<f64>::zeros(8, 8, 2, m.tsl.len());
    y.data.iter_mut().for_each(|z| *z = rnd(&mut rng));
    let mut cfg = ExperimentConfig::default();
    cfg.nx = 8;
    cfg.ny = 8;
    cfg.nc = 2;
    cfg.tsl_ms = m.tsl.clone();
    cfg.n_e = 4;
    cfg.hidden = 8;
    cfg.iters = 3;
    cfg.mode = Mode::Dc;
    let rec = reconstruct(&cfg, &y, &full, &m.encoder, None, None, &TrainOptions::default()).unwrap();
    let want = m.encoder.adjoint_full(&y).unwrap();
    for (a, b) in rec.image.data.iter().zip(&want.data) {
        assert!((a - b).norm() < 1e-10);
    }
    assert_eq!(rec.report.records.len(), 3);
}

#[test]
fn reconstruction_is_deterministic_and_warm_startable() {
    let m = micro();
    let mut cfg = ExperimentConfig::default();
    cfg.nx = 8;
    cfg.ny = 8;
    cfg.nc = 2;
    cfg.tsl_ms = m.tsl.clone();
    cfg.n_e = 4;
    cfg.hidden = 8;
    cfg.iters = 4;
    cfg.mode = Mode::Full;
    let opts = TrainOptions::default();
    let a = reconstruct(&cfg, &m.y, &m.mask, &m.encoder, Some(&m.kernel), None, &opts).unwrap();
    let b = reconstruct(&cfg, &m.y, &m.mask, &m.encoder, Some(&m.kernel), None, &opts).unwrap();
    assert_eq!(a.report.to_jsonl(), b.report.to_jsonl());
    assert_eq!(a.image, b.image);

    cfg.iters = 1;
    let warm = reconstruct(&cfg, &m.y, &m.mask, &m.encoder, Some(&m.kernel), Some(a.params.clone()), &opts).unwrap();
    assert_eq!(warm.report.records[0].total, a.report.summary.final_loss.total);

    let mut other = cfg.clone();
    other.hidden = 6;
    assert!(reconstruct(&other, &m.y, &m.mask, &m.encoder, Some(&m.kernel), Some(a.params), &opts).is_err());
}
