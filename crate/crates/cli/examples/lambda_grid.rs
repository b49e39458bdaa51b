//! Grid search over the prior weights for one config.
//!
//! `cargo run --release -p t1rho-inr-cli --example lambda_grid -- \
//!     configs/acceptance.json 1000 0.03,0.1,0.3 0,30,100`
//!
//! Simulates, undersamples and calibrates once, then trains one network per
//! `(lambda1, lambda2)` pair (HK mode when `lambda2 = 0`, SC mode when
//! `lambda1 = 0`, DC when both are 0, FULL otherwise) and prints a markdown
//! table of image and T1rho metrics next to the zero-filled baseline.

use std::path::Path;
use std::time::Instant;

use t1rho_inr::metrics::{compare_series, nrmse_masked};
use t1rho_inr::qmap::fit_series;
use t1rho_inr::tensor_io::read_tensor;
use t1rho_inr::trainer::{reconstruct, TrainOptions};
use t1rho_inr::{load_config, CoilMaps, Encoder, ExperimentConfig, ImageSeries, KtData, Mode, SamplingMask, SpiritKernel};
use t1rho_inr_cli::{cmd_calibrate, cmd_phantom, cmd_undersample, Dirs};

fn list(s: &str) -> Vec<f64> {
    s.split(',').map(|v| v.trim().parse().expect("number")).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 5 {
        eprintln!("usage: lambda_grid <config.json> <iters> <lambda1,...> <lambda2,...>");
        std::process::exit(2);
    }
    let mut cfg = load_config(&args[1]).expect("config");
    cfg.iters = args[2].parse().expect("iters");
    let (l1s, l2s) = (list(&args[3]), list(&args[4]));

    let dir = tempfile::tempdir().expect("tempdir");
    let dirs = Dirs::same(dir.path());
    cmd_phantom(&cfg, &dirs).expect("phantom");
    cmd_undersample(&cfg, &dirs).expect("undersample");
    cmd_calibrate(&cfg, &dirs).expect("calibrate");
    let data = Data::load(dir.path(), &cfg);

    println!("iterations {}, hidden {}, n_e {}, seed {}", cfg.iters, cfg.hidden, cfg.n_e, cfg.seed);
    println!();
    println!("| mode | lambda1 | lambda2 | PSNR (dB) | SSIM | NRMSE | T1rho NRMSE | seconds |");
    println!("|---|---|---|---|---|---|---|---|");
    data.row("ZF", 0.0, 0.0, &data.zero_filled(), 0.0);

    let mut runs = Vec::new();
    for &l1 in &l1s {
        for &l2 in &l2s {
            let mode = match (l1 > 0.0, l2 > 0.0) {
                (true, true) => Mode::Full,
                (true, false) => Mode::Hk,
                (false, true) => Mode::Sc,
                (false, false) => Mode::Dc,
            };
            runs.push((mode, l1, l2));
        }
    }
    for (mode, l1, l2) in runs {
        let mut c = cfg.clone();
        c.mode = mode;
        c.lambda1 = if l1 > 0.0 { l1 } else { cfg.lambda1 };
        c.lambda2 = if l2 > 0.0 { l2 } else { cfg.lambda2 };
        let t0 = Instant::now();
        let r = reconstruct(&c, &data.y, &data.mask, &data.encoder, Some(&data.kernel), None, &TrainOptions::default())
            .expect("reconstruct");
        data.row(mode.tag(), l1, l2, &r.image, t0.elapsed().as_secs_f64());
    }
}

struct Data {
    cfg: ExperimentConfig,
    y: KtData<f64>,
    mask: SamplingMask,
    encoder: Encoder<f64>,
    kernel: SpiritKernel<f64>,
    truth: ImageSeries<f64>,
    t1rho: Vec<f64>,
    support: Vec<bool>,
}

impl Data {
    fn load(dir: &Path, cfg: &ExperimentConfig) -> Self {
        let t = |name: &str| read_tensor(dir.join(name)).expect(name);
        let coils = CoilMaps::from_tensor(&t("coils.qkt")).expect("coils");
        let (kernel, _) = SpiritKernel::load(&dir.join("kernel.qkt"), &dir.join("kernel.json")).expect("kernel");
        // Map tensors are stored x-fastest on disk.
        let m0 = t1rho_inr::tensor_io::row_major_to_first_fastest(t("m0.qkt").as_real().expect("m0"), &[cfg.nx, cfg.ny]);
        let t1rho = t1rho_inr::tensor_io::row_major_to_first_fastest(
            t("t1rho.qkt").as_real().expect("t1rho"),
            &[cfg.nx, cfg.ny],
        );
        Data {
            cfg: cfg.clone(),
            y: KtData::from_tensor(&t("kt_under.qkt")).expect("kt_under"),
            mask: SamplingMask::from_tensor(&t("mask.qkt"), cfg.acs, cfg.accel).expect("mask"),
            encoder: Encoder::new(coils).expect("encoder"),
            kernel,
            truth: ImageSeries::from_tensor(&t("images.qkt"), cfg.tsl_ms.clone()).expect("images"),
            t1rho: t1rho.iter().map(|&v| v as f64).collect(),
            support: m0.iter().map(|&v| v > 0.0).collect(),
        }
    }

    fn zero_filled(&self) -> ImageSeries<f64> {
        let mut zf = self.encoder.adjoint(&self.y, &self.mask).expect("adjoint");
        zf.tsl_ms = self.cfg.tsl_ms.clone();
        zf
    }

    fn row(&self, method: &str, l1: f64, l2: f64, x: &ImageSeries<f64>, secs: f64) {
        let m = compare_series(x, &self.truth, "truth").expect("metrics").aggregate;
        let q = fit_series(x, Some(&self.support), self.cfg.t1rho_bounds, self.cfg.fit).expect("fit");
        let t1 = nrmse_masked(&q.t1rho_ms, &self.t1rho, &self.support).expect("t1rho nrmse");
        println!(
            "| {method} | {l1} | {l2} | {:.2} | {:.4} | {:.4} | {t1:.4} | {secs:.0} |",
            m.psnr, m.ssim, m.nrmse
        );
    }
}
