//! The pipeline stages. Each `cmd_*` reads its inputs from `dirs.input`,
//! writes its outputs to `dirs.output` and leaves a manifest next to them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use t1rho_inr::config::Stage;
use t1rho_inr::encoding::apply_mask;
use t1rho_inr::metrics::{compare_series, nrmse_masked, MetricsReport};
use t1rho_inr::phantom::{make_coil_maps, make_phantom, simulate_kt, simulate_weighted_images};
use t1rho_inr::priors::spirit::{calibrate_spirit, extract_acs, KernelMeta};
use t1rho_inr::qmap::{fit_series, QuantMaps};
use t1rho_inr::sampling::{acs_start, make_mask, net_acceleration};
use t1rho_inr::tensor_io::{preview_pgm_bytes, Tensor};
use t1rho_inr::trainer::{reconstruct, TrainOptions};
use t1rho_inr::{
    CoilMaps, Encoder, ExperimentConfig, ImageSeries, KtData, Mlp64, Mode, SamplingMask, SpiritKernel,
};

use crate::ablation::{AblationRow, AblationTable};
use crate::error::{CliError, CliResult};
use crate::manifest::{Recorder, RunManifest};

pub const M0: &str = "m0.qkt";
pub const T1RHO: &str = "t1rho.qkt";
pub const COILS: &str = "coils.qkt";
pub const IMAGES: &str = "images.qkt";
pub const KT_FULL: &str = "kt_full.qkt";
pub const KT_UNDER: &str = "kt_under.qkt";
pub const MASK: &str = "mask.qkt";
pub const KERNEL: &str = "kernel.qkt";
pub const KERNEL_META: &str = "kernel.json";
pub const ZERO_FILLED: &str = "zero_filled.qkt";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TEXT: &str = "ablation.txt";

pub fn recon_file(mode: Mode) -> String {
    format!("recon_{}.qkt", mode.tag().to_ascii_lowercase())
}

pub fn report_file(mode: Mode) -> String {
    format!("report_{}.jsonl", mode.tag().to_ascii_lowercase())
}

pub fn checkpoint_dir(mode: Mode) -> String {
    format!("net_{}", mode.tag().to_ascii_lowercase())
}

/// File name without its extension, used to name derived outputs.
pub fn stem(rel: &str) -> String {
    let name = Path::new(rel).file_stem().map(|s| s.to_string_lossy().into_owned());
    name.unwrap_or_else(|| rel.to_string())
}

#[derive(Clone, Debug)]
pub struct Dirs {
    pub input: PathBuf,
    pub output: PathBuf,
}

impl Dirs {
    /// Inputs and outputs in the same directory.
    pub fn same(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        Dirs {
            input: dir.clone(),
            output: dir,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsArgs {
    pub images: String,
    pub reference: String,
    /// Fitted T1ρ map of `images`, compared inside `support`.
    #[serde(default)]
    pub t1rho: Option<String>,
    #[serde(default)]
    pub reference_t1rho: Option<String>,
    #[serde(default)]
    pub support: Option<String>,
}

/// A command together with its file arguments, as stored in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    Phantom,
    Undersample,
    Calibrate,
    Reconstruct {
        #[serde(default)]
        warm_start: Option<String>,
    },
    Fit {
        images: String,
        #[serde(default)]
        support: Option<String>,
    },
    Metrics(MetricsArgs),
    Ablate,
    Repro,
}

impl Command {
    pub fn manifest_name(&self, cfg: &ExperimentConfig) -> String {
        match self {
            Command::Phantom => "phantom.manifest.json".into(),
            Command::Undersample => "undersample.manifest.json".into(),
            Command::Calibrate => "calibrate.manifest.json".into(),
            Command::Reconstruct { .. } => {
                format!("reconstruct_{}.manifest.json", cfg.mode.tag().to_ascii_lowercase())
            }
            Command::Fit { images, .. } => format!("fit_{}.manifest.json", stem(images)),
            Command::Metrics(a) => format!("metrics_{}.manifest.json", stem(&a.images)),
            Command::Ablate => "ablate.manifest.json".into(),
            Command::Repro => "repro.manifest.json".into(),
        }
    }
}

/// Runs one command.
pub fn run(command: &Command, cfg: &ExperimentConfig, dirs: &Dirs) -> CliResult<RunManifest> {
    match command {
        Command::Phantom => cmd_phantom(cfg, dirs),
        Command::Undersample => cmd_undersample(cfg, dirs),
        Command::Calibrate => cmd_calibrate(cfg, dirs),
        Command::Reconstruct { warm_start } => cmd_reconstruct(cfg, dirs, warm_start.as_deref()),
        Command::Fit { images, support } => cmd_fit(cfg, dirs, images, support.as_deref()),
        Command::Metrics(a) => cmd_metrics(cfg, dirs, a),
        Command::Ablate => cmd_ablate(cfg, dirs).map(|(_, m)| m),
        Command::Repro => cmd_repro(cfg, &dirs.output).map(|(_, m)| m),
    }
}

/// Reruns the command recorded in a manifest and checks that its inputs
/// and outputs hash identically. Inputs are looked up in `input`, or next to
/// the manifest when `None`.
pub fn replay(manifest: &Path, output: &Path, input: Option<&Path>) -> CliResult<RunManifest> {
    let original = RunManifest::load(manifest)?;
    let input = match input {
        Some(p) => p.to_path_buf(),
        None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for r in &original.inputs {
        let path = input.join(&r.path);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let found = crate::manifest::sha256_hex(&bytes);
        if found != r.sha256 {
            return Err(CliError::InputMismatch {
                path: path.display().to_string(),
                expected: r.sha256.clone(),
                found,
            });
        }
    }
    let cfg = original.config.clone().validated()?;
    let dirs = Dirs {
        input,
        output: output.to_path_buf(),
    };
    let rerun = run(&original.command, &cfg, &dirs)?;
    original.verify_rerun(&rerun)?;
    Ok(rerun)
}

fn read_maps_tensor(t: &Tensor, cfg: &ExperimentConfig, what: &str) -> CliResult<Vec<f64>> {
    t.expect_dims(&[cfg.nx, cfg.ny])?;
    let v = t1rho_inr::tensor_io::row_major_to_first_fastest(t.as_real()?, &t.dims);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(t1rho_inr::Error::NonFinite(format!("{what} map")).into());
    }
    Ok(v.into_iter().map(f64::from).collect())
}

fn map_tensor(v: &[f64], nx: usize, ny: usize) -> CliResult<Tensor> {
    let data: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    let dims = [nx, ny];
    Ok(Tensor::real(
        dims.to_vec(),
        t1rho_inr::tensor_io::first_fastest_to_row_major(&data, &dims),
    )?)
}

fn read_images(rec: &mut Recorder, role: &str, rel: &str, cfg: &ExperimentConfig) -> CliResult<ImageSeries<f64>> {
    let t = rec.read_tensor(role, rel)?;
    let x = ImageSeries::from_tensor(&t, cfg.tsl_ms.clone())?;
    if x.nx != cfg.nx || x.ny != cfg.ny {
        return Err(t1rho_inr::Error::Shape(format!(
            "{rel} is {}x{} but the config says {}x{}",
            x.nx, x.ny, cfg.nx, cfg.ny
        ))
        .into());
    }
    Ok(x)
}

fn read_support(rec: &mut Recorder, rel: &str, cfg: &ExperimentConfig) -> CliResult<Vec<bool>> {
    let t = rec.read_tensor("support", rel)?;
    Ok(read_maps_tensor(&t, cfg, "support")?.into_iter().map(|v| v != 0.0).collect())
}

fn read_mask(rec: &mut Recorder, cfg: &ExperimentConfig) -> CliResult<SamplingMask> {
    let t = rec.read_tensor("mask", MASK)?;
    let mask = SamplingMask::from_tensor(&t, cfg.acs, cfg.accel)?;
    if mask.ny != cfg.ny || mask.nt != cfg.nt() {
        return Err(t1rho_inr::Error::Shape(format!(
            "mask is {}x{} but the config needs {}x{}",
            mask.ny,
            mask.nt,
            cfg.ny,
            cfg.nt()
        ))
        .into());
    }
    Ok(mask)
}

fn read_kt(rec: &mut Recorder, role: &str, rel: &str) -> CliResult<KtData<f64>> {
    let t = rec.read_tensor(role, rel)?;
    Ok(KtData::from_tensor(&t)?)
}

fn write_images(rec: &mut Recorder, role: &str, rel: &str, x: &ImageSeries<f64>) -> CliResult<()> {
    rec.write_tensor(role, rel, &x.to_tensor()?)
}

/// Simulates the phantom, coils, weighted images and fully sampled k-space.
pub fn cmd_phantom(cfg: &ExperimentConfig, dirs: &Dirs) -> CliResult<RunManifest> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let (maps, images, coils, kt) = rec.time("simulate", || -> CliResult<_> {
        let maps = make_phantom(&cfg.phantom, cfg.nx, cfg.ny)?;
        let images = simulate_weighted_images(&maps, &cfg.tsl_ms, cfg.phase_map)?;
        let coils = make_coil_maps::<f64>(cfg.nx, cfg.ny, cfg.nc, cfg.stage_seed(Stage::Coils))?;
        let kt = simulate_kt(&images, &coils, cfg.noise_sigma, cfg.stage_seed(Stage::Noise))?;
        Ok((maps, images, coils, kt))
    })?;
    rec.write_tensor("m0", M0, &map_tensor(&maps.m0, cfg.nx, cfg.ny)?)?;
    rec.write_tensor("t1rho", T1RHO, &map_tensor(&maps.t1rho_ms, cfg.nx, cfg.ny)?)?;
    rec.write_tensor("coils", COILS, &coils.to_tensor()?)?;
    write_images(&mut rec, "images", IMAGES, &images)?;
    rec.write_tensor("kt_full", KT_FULL, &kt.to_tensor()?)?;
    rec.detail("support_pixels", json!(maps.support.iter().filter(|&&s| s).count()));
    rec.finish(Command::Phantom, cfg, &Command::Phantom.manifest_name(cfg))
}

/// Draws the sampling mask and keeps only the sampled lines.
pub fn cmd_undersample(cfg: &ExperimentConfig, dirs: &Dirs) -> CliResult<RunManifest> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let kt = read_kt(&mut rec, "kt_full", KT_FULL)?;
    if kt.nx != cfg.nx || kt.ny != cfg.ny || kt.nt != cfg.nt() {
        return Err(t1rho_inr::Error::Shape(format!(
            "k-space is {}x{}x{} but the config needs {}x{}x{}",
            kt.nx,
            kt.ny,
            kt.nt,
            cfg.nx,
            cfg.ny,
            cfg.nt()
        ))
        .into());
    }
    let (mask, under) = rec.time("undersample", || -> CliResult<_> {
        let mask = make_mask(cfg.ny, cfg.accel, cfg.acs, cfg.nt(), cfg.stage_seed(Stage::Mask))?;
        let under = apply_mask(&kt, &mask)?;
        Ok((mask, under))
    })?;
    rec.write_tensor("kt_under", KT_UNDER, &under.to_tensor()?)?;
    rec.write_tensor("mask", MASK, &mask.to_tensor()?)?;
    rec.detail("lines_per_tsl", json!(mask.sampled_lines() / mask.nt));
    rec.detail("net_acceleration", json!(net_acceleration(&mask)?));
    rec.finish(Command::Undersample, cfg, &Command::Undersample.manifest_name(cfg))
}

/// Calibrates the k-t self-consistency kernel from the ACS block.
pub fn cmd_calibrate(cfg: &ExperimentConfig, dirs: &Dirs) -> CliResult<RunManifest> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let kt = read_kt(&mut rec, "kt_under", KT_UNDER)?;
    let mask = read_mask(&mut rec, cfg)?;
    let start = acs_start(cfg.ny, cfg.acs);
    for t in 0..mask.nt {
        if let Some(y) = (start..start + cfg.acs).find(|&y| !mask.is_sampled(y, t)) {
            return Err(t1rho_inr::Error::Invalid(format!(
                "ACS line {y} is not sampled at TSL index {t}; the mask does not match acs = {}",
                cfg.acs
            ))
            .into());
        }
    }
    let kernel = rec.time("calibrate", || -> CliResult<_> {
        let block = extract_acs(&kt, start, cfg.acs)?;
        Ok(calibrate_spirit(&block, &cfg.kernel)?)
    })?;
    let meta = kernel.meta(cfg.nx, cfg.ny, cfg.acs);
    rec.write_tensor("kernel", KERNEL, &kernel.to_tensor()?)?;
    let meta_json = serde_json::to_string_pretty(&meta).map_err(t1rho_inr::Error::from)?;
    rec.write("kernel_meta", KERNEL_META, meta_json.as_bytes())?;
    rec.detail("tau", json!(cfg.kernel.tau));
    rec.detail("window", json!([cfg.kernel.wx, cfg.kernel.wy, cfg.kernel.wt]));
    rec.finish(Command::Calibrate, cfg, &Command::Calibrate.manifest_name(cfg))
}

struct ReconInputs {
    y: KtData<f64>,
    mask: SamplingMask,
    encoder: Encoder<f64>,
    kernel: Option<SpiritKernel<f64>>,
}

fn read_recon_inputs(rec: &mut Recorder, cfg: &ExperimentConfig, need_kernel: bool) -> CliResult<ReconInputs> {
    let y = read_kt(rec, "kt_under", KT_UNDER)?;
    let mask = read_mask(rec, cfg)?;
    let coils = CoilMaps::<f64>::from_tensor(&rec.read_tensor("coils", COILS)?)?;
    let encoder = Encoder::new(coils)?;
    let kernel = if need_kernel {
        let t = rec.read_tensor("kernel", KERNEL)?;
        let meta_bytes = rec.read("kernel_meta", KERNEL_META)?;
        let meta: KernelMeta = serde_json::from_slice(&meta_bytes).map_err(t1rho_inr::Error::from)?;
        Some(SpiritKernel::from_tensor(&t, &meta)?)
    } else {
        None
    };
    Ok(ReconInputs {
        y,
        mask,
        encoder,
        kernel,
    })
}

/// Sorted names of the regular, non-hidden files in `dir`.
fn list_files(dir: &Path) -> CliResult<Vec<String>> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let e = e.map_err(|e| CliError::io(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') && e.path().is_file() {
            files.push(name);
        }
    }
    files.sort();
    Ok(files)
}

/// Trains in `cfg.mode` and writes the image, report and network.
fn reconstruct_into(
    rec: &mut Recorder,
    cfg: &ExperimentConfig,
    inputs: &ReconInputs,
    warm_start: Option<Mlp64>,
) -> CliResult<ImageSeries<f64>> {
    let mode = cfg.mode;
    let opts = TrainOptions {
        checkpoint_dir: Some(rec.output_dir.join(format!("{}_diverged", checkpoint_dir(mode)))),
    };
    let label = format!("train_{}", mode.tag().to_ascii_lowercase());
    let r = rec.time(&label, || {
        reconstruct(
            cfg,
            &inputs.y,
            &inputs.mask,
            &inputs.encoder,
            inputs.kernel.as_ref(),
            warm_start,
            &opts,
        )
    })?;
    write_images(rec, "recon", &recon_file(mode), &r.image)?;
    rec.write("report", &report_file(mode), r.report.to_jsonl().as_bytes())?;
    let net = checkpoint_dir(mode);
    let net_dir = rec.output_dir.join(&net);
    t1rho_inr::inr::save_params(&net_dir, &r.params)?;
    for f in list_files(&net_dir)? {
        rec.record_written("checkpoint", &format!("{net}/{f}"))?;
    }
    Ok(r.image)
}

/// Fits the coordinate network in `cfg.mode` to the undersampled data.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, dirs: &Dirs, warm_start: Option<&str>) -> CliResult<RunManifest> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let inputs = read_recon_inputs(&mut rec, cfg, cfg.mode.uses_self_consistency())?;
    let warm = match warm_start {
        Some(rel) => {
            let dir = dirs.input.join(rel);
            for f in list_files(&dir)? {
                rec.read("warm_start", &format!("{rel}/{f}"))?;
            }
            Some(t1rho_inr::inr::load_params_checked::<f64>(&dir, &cfg.arch())?)
        }
        None => None,
    };
    reconstruct_into(&mut rec, cfg, &inputs, warm)?;
    rec.detail("mode", json!(cfg.mode.tag()));
    let command = Command::Reconstruct {
        warm_start: warm_start.map(str::to_string),
    };
    let name = command.manifest_name(cfg);
    rec.finish(command, cfg, &name)
}

fn preview(rec: &mut Recorder, rel: &str, v: &[f64], nx: usize, ny: usize) -> CliResult<()> {
    let bytes = preview_pgm_bytes(v, nx, ny)?;
    rec.write("preview", rel, &bytes)
}

/// Fits maps and writes them with previews of the map and every TSL frame.
fn fit_into(
    rec: &mut Recorder,
    cfg: &ExperimentConfig,
    images: &ImageSeries<f64>,
    name: &str,
    support: Option<&[bool]>,
) -> CliResult<QuantMaps> {
    let maps = rec.time(&format!("fit_{name}"), || fit_series(images, support, cfg.t1rho_bounds, cfg.fit))?;
    let [m0, t1rho, residual, flags] = maps.to_tensors()?;
    rec.write_tensor("m0_fit", &format!("{name}_m0.qkt"), &m0)?;
    rec.write_tensor("t1rho_fit", &format!("{name}_t1rho.qkt"), &t1rho)?;
    rec.write_tensor("residual", &format!("{name}_residual.qkt"), &residual)?;
    rec.write_tensor("flags", &format!("{name}_flags.qkt"), &flags)?;
    preview(rec, &format!("{name}_t1rho.pgm"), &maps.t1rho_ms, maps.nx, maps.ny)?;
    for t in 0..images.nt() {
        preview(rec, &format!("{name}_tsl{t}.pgm"), &images.frame_magnitude(t), images.nx, images.ny)?;
    }
    Ok(maps)
}

/// Mono-exponential T1ρ fit of an image series.
pub fn cmd_fit(cfg: &ExperimentConfig, dirs: &Dirs, images: &str, support: Option<&str>) -> CliResult<RunManifest> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let x = read_images(&mut rec, "images", images, cfg)?;
    let mask = match support {
        Some(rel) => Some(read_support(&mut rec, rel, cfg)?),
        None => None,
    };
    let maps = fit_into(&mut rec, cfg, &x, &stem(images), mask.as_deref())?;
    rec.detail("fitted_pixels", json!(maps.fit_mask.iter().filter(|&&m| m).count()));
    let command = Command::Fit {
        images: images.into(),
        support: support.map(str::to_string),
    };
    let name = command.manifest_name(cfg);
    rec.finish(command, cfg, &name)
}

fn metrics_into(
    rec: &mut Recorder,
    images: &ImageSeries<f64>,
    reference: &ImageSeries<f64>,
    reference_label: &str,
    t1rho: Option<(&[f64], &[f64], &[bool])>,
    name: &str,
) -> CliResult<MetricsReport> {
    let mut report = compare_series(images, reference, reference_label)?;
    if let Some((fit, truth, support)) = t1rho {
        report.t1rho_nrmse = Some(nrmse_masked(fit, truth, support)?);
    }
    let text = serde_json::to_string_pretty(&report).map_err(t1rho_inr::Error::from)?;
    rec.write("metrics", &format!("{name}_metrics.json"), text.as_bytes())?;
    Ok(report)
}

/// PSNR, SSIM and NRMSE of an image series against a reference, plus the
/// T1ρ map NRMSE inside a support when maps are given.
pub fn cmd_metrics(cfg: &ExperimentConfig, dirs: &Dirs, args: &MetricsArgs) -> CliResult<RunManifest> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let x = read_images(&mut rec, "images", &args.images, cfg)?;
    let r = read_images(&mut rec, "reference", &args.reference, cfg)?;
    let maps = match (&args.t1rho, &args.reference_t1rho, &args.support) {
        (Some(a), Some(b), Some(s)) => {
            let fit = read_maps_tensor(&rec.read_tensor("t1rho", a)?, cfg, "t1rho")?;
            let truth = read_maps_tensor(&rec.read_tensor("reference_t1rho", b)?, cfg, "reference t1rho")?;
            Some((fit, truth, read_support(&mut rec, s, cfg)?))
        }
        (None, None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "--t1rho, --reference-t1rho and --support must be given together".into(),
            ))
        }
    };
    let report = metrics_into(
        &mut rec,
        &x,
        &r,
        &args.reference,
        maps.as_ref().map(|(a, b, s)| (a.as_slice(), b.as_slice(), s.as_slice())),
        &stem(&args.images),
    )?;
    rec.detail("aggregate", serde_json::to_value(report.aggregate).map_err(t1rho_inr::Error::from)?);
    let command = Command::Metrics(args.clone());
    let name = command.manifest_name(cfg);
    rec.finish(command, cfg, &name)
}

/// Reconstructs in all four modes, fits maps and tabulates metrics against
/// the simulated ground truth, with the zero-filled adjoint as baseline.
pub fn cmd_ablate(cfg: &ExperimentConfig, dirs: &Dirs) -> CliResult<(AblationTable, RunManifest)> {
    let mut rec = Recorder::new(&dirs.input, &dirs.output)?;
    let inputs = read_recon_inputs(&mut rec, cfg, true)?;
    let truth = read_images(&mut rec, "images", IMAGES, cfg)?;
    let t1rho_truth = read_maps_tensor(&rec.read_tensor("t1rho", T1RHO)?, cfg, "t1rho")?;
    let support = read_support(&mut rec, M0, cfg)?;

    let mut zf = inputs.encoder.adjoint(&inputs.y, &inputs.mask)?;
    zf.tsl_ms = cfg.tsl_ms.clone();
    write_images(&mut rec, "zero_filled", ZERO_FILLED, &zf)?;

    let mut candidates: Vec<(String, ImageSeries<f64>)> = vec![("ZF".into(), zf)];
    for mode in Mode::ALL {
        let mut c = cfg.clone();
        c.mode = mode;
        let x = reconstruct_into(&mut rec, &c, &inputs, None)?;
        candidates.push((mode.tag().into(), x));
    }

    let mut rows = Vec::with_capacity(candidates.len());
    for (method, x) in &candidates {
        let name = if method == "ZF" {
            stem(ZERO_FILLED)
        } else {
            stem(&recon_file(method.parse()?))
        };
        let maps = fit_into(&mut rec, cfg, x, &name, Some(&support))?;
        let report = metrics_into(
            &mut rec,
            x,
            &truth,
            IMAGES,
            Some((&maps.t1rho_ms, &t1rho_truth, &support)),
            &name,
        )?;
        rows.push(AblationRow {
            method: method.clone(),
            psnr: report.aggregate.psnr,
            ssim: report.aggregate.ssim,
            nrmse: report.aggregate.nrmse,
            t1rho_nrmse: report.t1rho_nrmse.unwrap_or(f64::NAN),
        });
    }
    let table = AblationTable {
        iters: cfg.iters,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        rows,
    };
    let json_text = serde_json::to_string_pretty(&table).map_err(t1rho_inr::Error::from)?;
    rec.write("ablation", ABLATION_JSON, json_text.as_bytes())?;
    rec.write("ablation_table", ABLATION_TEXT, table.to_text().as_bytes())?;
    let m = rec.finish(Command::Ablate, cfg, &Command::Ablate.manifest_name(cfg))?;
    Ok((table, m))
}

/// Every stage for one configuration, from simulation to the ablation table.
pub fn cmd_repro(cfg: &ExperimentConfig, out: &Path) -> CliResult<(AblationTable, RunManifest)> {
    let dirs = Dirs::same(out);
    let mut rec = Recorder::new(out, out)?;
    for (label, step) in [
        ("phantom", cmd_phantom as fn(&ExperimentConfig, &Dirs) -> CliResult<RunManifest>),
        ("undersample", cmd_undersample),
        ("calibrate", cmd_calibrate),
    ] {
        let m = step(cfg, &dirs)?;
        rec.absorb(label, &m);
    }
    let (table, m) = cmd_ablate(cfg, &dirs)?;
    rec.absorb("ablate", &m);
    rec.detail("ablation", serde_json::to_value(&table).map_err(t1rho_inr::Error::from)?);
    let m = rec.finish(Command::Repro, cfg, &Command::Repro.manifest_name(cfg))?;
    Ok((table, m))
}
