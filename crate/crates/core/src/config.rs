//! Experiment configuration (JSON), validation and defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::PhantomSpec;

/// Which terms enter the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Data consistency only.
    #[serde(rename = "DC")]
    Dc,
    /// Data consistency plus k-t self-consistency.
    #[serde(rename = "SC")]
    Sc,
    /// Data consistency plus Hankel low-rank.
    #[serde(rename = "HK")]
    Hk,
    /// All three terms.
    #[serde(rename = "FULL")]
    Full,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Dc, Mode::Sc, Mode::Hk, Mode::Full];

    pub fn tag(self) -> &'static str {
        match self {
            Mode::Dc => "DC",
            Mode::Sc => "SC",
            Mode::Hk => "HK",
            Mode::Full => "FULL",
        }
    }

    pub fn uses_hankel(self) -> bool {
        matches!(self, Mode::Hk | Mode::Full)
    }

    pub fn uses_self_consistency(self) -> bool {
        matches!(self, Mode::Sc | Mode::Full)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DC" => Ok(Mode::Dc),
            "SC" => Ok(Mode::Sc),
            "HK" => Ok(Mode::Hk),
            "FULL" => Ok(Mode::Full),
            _ => Err(Error::config(
                "mode",
                format!("`{s}` is not one of DC, SC, HK, FULL"),
            )),
        }
    }
}

/// How the gradient of the normalized L1 data term treats its denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DcGradient {
    /// Denominator held constant at the current iterate.
    #[default]
    Frozen,
    /// Full quotient rule.
    Quotient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[default]
    GaussNewton,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub every: usize,
}

impl LrSchedule {
    pub const MAIN: LrSchedule = LrSchedule {
        base: 3.5e-4,
        decay: 0.5,
        every: 700,
    };
    pub const PRETRAIN: LrSchedule = LrSchedule {
        base: 1e-4,
        decay: 0.5,
        every: 700,
    };

    /// `base · decay^⌊iter / every⌋`.
    pub fn at(&self, iter: usize) -> f64 {
        self.base * self.decay.powi((iter / self.every) as i32)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::MAIN
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub wx: usize,
    pub wy: usize,
    pub wt: usize,
    pub tau: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            wx: 5,
            wy: 5,
            wt: 3,
            tau: 1e-2,
        }
    }
}

/// Validated experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(rename = "N_x")]
    pub nx: usize,
    #[serde(rename = "N_y")]
    pub ny: usize,
    #[serde(rename = "N_c")]
    pub nc: usize,
    pub tsl_ms: Vec<f64>,
    #[serde(rename = "R")]
    pub accel: f64,
    pub acs: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub n_e: usize,
    pub sigma: f64,
    pub omega0: f64,
    pub hidden: usize,
    pub depth: usize,
    pub skips: Vec<usize>,
    pub iters: usize,
    pub lr: LrSchedule,
    pub seed: u64,
    pub mode: Mode,
    pub noise_sigma: f64,
    pub phase_map: bool,
    pub paper_literal_init: bool,
    pub dc_gradient: DcGradient,
    pub kernel: KernelSpec,
    pub fit: FitMethod,
    pub t1rho_bounds: [f64; 2],
    pub phantom: PhantomSpec,
}

/// Tabulated (λ1, λ2) by acceleration factor.
pub const LAMBDA_TABLE: [(f64, f64, f64); 3] =
    [(6.0, 15.8, 1277.0), (10.0, 10.7, 1480.0), (14.0, 13.8, 1538.0)];

/// λ defaults for the tabulated acceleration nearest to `r`.
pub fn default_lambdas(r: f64) -> (f64, f64) {
    let (_, l1, l2) = LAMBDA_TABLE
        .iter()
        .copied()
        .min_by(|a, b| (a.0 - r).abs().total_cmp(&(b.0 - r).abs()))
        .expect("table is non-empty");
    (l1, l2)
}

/// Default ACS line count: 1/16 of the phase-encode lines, at least 8 so a
/// 5×5 calibration window fits.
pub fn default_acs(ny: usize) -> usize {
    (ny / 16).max(8).min(ny)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "N_x")]
    nx: Option<i64>,
    #[serde(rename = "N_y")]
    ny: Option<i64>,
    #[serde(rename = "N_c")]
    nc: Option<i64>,
    tsl_ms: Option<Vec<f64>>,
    #[serde(rename = "R")]
    accel: Option<f64>,
    acs: Option<i64>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    n_e: Option<i64>,
    sigma: Option<f64>,
    omega0: Option<f64>,
    hidden: Option<i64>,
    depth: Option<i64>,
    skips: Option<Vec<i64>>,
    iters: Option<i64>,
    lr: Option<LrSchedule>,
    pretrain: Option<bool>,
    seed: Option<u64>,
    mode: Option<String>,
    noise_sigma: Option<f64>,
    phase_map: Option<bool>,
    paper_literal_init: Option<bool>,
    dc_gradient: Option<DcGradient>,
    kernel: Option<KernelSpec>,
    fit: Option<FitMethod>,
    t1rho_bounds: Option<[f64; 2]>,
    phantom: Option<PhantomSpec>,
}

fn positive(field: &str, v: Option<i64>, default: usize) -> Result<usize> {
    match v {
        None => Ok(default),
        Some(x) if x > 0 => Ok(x as usize),
        Some(x) => Err(Error::config(field, format!("must be positive, got {x}"))),
    }
}

fn nonneg_f(field: &str, v: Option<f64>, default: f64) -> Result<f64> {
    let x = v.unwrap_or(default);
    if !x.is_finite() || x < 0.0 {
        return Err(Error::config(field, format!("must be finite and >= 0, got {x}")));
    }
    Ok(x)
}

fn positive_f(field: &str, v: Option<f64>, default: f64) -> Result<f64> {
    let x = v.unwrap_or(default);
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::config(field, format!("must be finite and > 0, got {x}")));
    }
    Ok(x)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_json_str("{}").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub const DEFAULT_TSL_MS: [f64; 5] = [1.0, 20.0, 40.0, 60.0, 80.0];
    pub const UNIFORM_TSL_MS: [f64; 5] = [20.0, 40.0, 60.0, 80.0, 100.0];

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(s).map_err(|e| {
            let msg = e.to_string();
            // serde names the offending key for unknown fields; keep it visible.
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("<json>")
                .to_string();
            Error::Config { field, reason: msg }
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let nx = positive("N_x", raw.nx, 64)?;
        let ny = positive("N_y", raw.ny, 64)?;
        let nc = positive("N_c", raw.nc, 4)?;

        let tsl_ms = raw.tsl_ms.unwrap_or_else(|| Self::DEFAULT_TSL_MS.to_vec());
        if tsl_ms.len() < 2 {
            return Err(Error::config("tsl_ms", "need at least 2 TSLs"));
        }
        if tsl_ms.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::config("tsl_ms", "TSLs must be finite and >= 0"));
        }
        if tsl_ms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("tsl_ms", "TSL list must be strictly increasing"));
        }

        let accel = raw.accel.unwrap_or(4.0);
        if !accel.is_finite() || accel < 1.0 {
            return Err(Error::config("R", format!("must be >= 1, got {accel}")));
        }
        let acs = positive("acs", raw.acs, default_acs(ny))?;
        if acs > ny {
            return Err(Error::config("acs", format!("{acs} exceeds N_y = {ny}")));
        }

        let (d1, d2) = default_lambdas(accel);
        let lambda1 = nonneg_f("lambda1", raw.lambda1, d1)?;
        let lambda2 = nonneg_f("lambda2", raw.lambda2, d2)?;

        let n_e = positive("n_e", raw.n_e, 128)?;
        let sigma = positive_f("sigma", raw.sigma, 1.0)?;
        let omega0 = positive_f("omega0", raw.omega0, 30.0)?;
        let hidden = positive("hidden", raw.hidden, 256)?;
        let depth = positive("depth", raw.depth, 9)?;
        if depth < 2 {
            return Err(Error::config("depth", "need at least 2 layers"));
        }
        let skips = match raw.skips {
            None => [3usize, 5, 7].into_iter().filter(|&s| s < depth).collect(),
            Some(v) => {
                let mut out = Vec::with_capacity(v.len());
                for s in v {
                    if s < 1 || s as usize >= depth {
                        return Err(Error::config(
                            "skips",
                            format!("skip after layer {s} is outside 1..{depth}"),
                        ));
                    }
                    out.push(s as usize);
                }
                out
            }
        };
        let iters = match raw.iters {
            None => 3500,
            Some(x) if x >= 0 => x as usize,
            Some(x) => return Err(Error::config("iters", format!("must be >= 0, got {x}"))),
        };
        let lr = match (raw.lr, raw.pretrain.unwrap_or(false)) {
            (Some(lr), _) => lr,
            (None, true) => LrSchedule::PRETRAIN,
            (None, false) => LrSchedule::MAIN,
        };
        if !(lr.base > 0.0) || !(lr.decay > 0.0) || lr.every == 0 {
            return Err(Error::config("lr", "base and decay must be > 0, every >= 1"));
        }
        let mode = match raw.mode {
            None => Mode::Full,
            Some(s) => s.parse()?,
        };
        let noise_sigma = nonneg_f("noise_sigma", raw.noise_sigma, 0.002)?;
        let kernel = raw.kernel.unwrap_or_default();
        for (name, w) in [("kernel.wx", kernel.wx), ("kernel.wy", kernel.wy), ("kernel.wt", kernel.wt)] {
            if w == 0 || w % 2 == 0 {
                return Err(Error::config(name, format!("window must be odd and positive, got {w}")));
            }
        }
        nonneg_f("kernel.tau", Some(kernel.tau), 0.0)?;
        let t1rho_bounds = raw.t1rho_bounds.unwrap_or([1.0, 500.0]);
        if !(t1rho_bounds[0] > 0.0 && t1rho_bounds[1] > t1rho_bounds[0]) {
            return Err(Error::config("t1rho_bounds", "need 0 < min < max"));
        }
        let phantom = raw.phantom.unwrap_or_else(PhantomSpec::brain_like);
        phantom.validate()?;

        Ok(ExperimentConfig {
            nx,
            ny,
            nc,
            tsl_ms,
            accel,
            acs,
            lambda1,
            lambda2,
            n_e,
            sigma,
            omega0,
            hidden,
            depth,
            skips,
            iters,
            lr,
            seed: raw.seed.unwrap_or(0),
            mode,
            noise_sigma,
            phase_map: raw.phase_map.unwrap_or(true),
            paper_literal_init: raw.paper_literal_init.unwrap_or(false),
            dc_gradient: raw.dc_gradient.unwrap_or_default(),
            kernel,
            fit: raw.fit.unwrap_or_default(),
            t1rho_bounds,
            phantom,
        })
    }

    /// Re-validates a config assembled in code.
    pub fn validated(self) -> Result<Self> {
        let json = serde_json::to_string(&self)?;
        Self::from_json_str(&json)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn nt(&self) -> usize {
        self.tsl_ms.len()
    }

    /// Independent seed for one pipeline stage, derived from the master seed.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        splitmix64(self.seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Stage {
    Coils = 1,
    Noise = 2,
    Mask = 3,
    Network = 4,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json_str(&text)
}
