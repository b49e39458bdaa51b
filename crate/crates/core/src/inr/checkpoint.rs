//! Network checkpoints: a directory holding one float64 tensor file per
//! parameter array and a `meta.json` sidecar describing the architecture.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::embedding::{FourierEmbedding, COORD_DIM};
use super::mlp::{Dense, MlpArch, MlpParams};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor_io::{read_tensor, write_atomic, write_tensor, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    version: u32,
    arch: MlpArch,
    sigma: f64,
}

pub fn save_params<T: Real>(dir: impl AsRef<Path>, params: &MlpParams<T>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let as64 = |it: &mut dyn Iterator<Item = &T>| it.map(|v| v.as_f64()).collect::<Vec<_>>();
    let b = &params.embedding.b;
    write_tensor(
        dir.join("embedding.qkt"),
        &Tensor::real64(vec![b.nrows(), b.ncols()], as64(&mut b.iter()))?,
    )?;
    for (i, d) in params.layers.iter().enumerate() {
        let (r, c) = d.weight.dim();
        write_tensor(
            dir.join(format!("layer{}_weight.qkt", i + 1)),
            &Tensor::real64(vec![r, c], as64(&mut d.weight.iter()))?,
        )?;
        write_tensor(
            dir.join(format!("layer{}_bias.qkt", i + 1)),
            &Tensor::real64(vec![c], as64(&mut d.bias.iter()))?,
        )?;
    }
    let meta = Meta {
        version: CHECKPOINT_VERSION,
        arch: params.arch.clone(),
        sigma: params.embedding.sigma,
    };
    write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())
}

/// Loads a checkpoint with whatever architecture it declares.
pub fn load_params<T: Real>(dir: impl AsRef<Path>) -> Result<MlpParams<T>> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: meta.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    load_with_arch(dir, &meta.arch, meta.sigma)
}

/// Loads a checkpoint into `expected`, reporting the first layer whose shape
/// disagrees.
pub fn load_params_checked<T: Real>(dir: impl AsRef<Path>, expected: &MlpArch) -> Result<MlpParams<T>> {
    let params = load_params::<T>(dir)?;
    if params.arch.n_e != expected.n_e {
        return Err(Error::Architecture {
            layer: "embedding".into(),
            reason: format!("n_e {} but expected {}", params.arch.n_e, expected.n_e),
        });
    }
    for l in 1..=expected.depth.max(params.arch.depth) {
        let want = (l <= expected.depth).then(|| (expected.input_width(l), expected.output_width(l)));
        let have = params.layers.get(l - 1).map(|d| d.weight.dim());
        if want != have {
            return Err(Error::Architecture {
                layer: format!("layer {l}"),
                reason: format!("checkpoint weight shape {have:?}, network expects {want:?}"),
            });
        }
    }
    if params.arch.omega0 != expected.omega0 || params.arch.skips != expected.skips {
        return Err(Error::Architecture {
            layer: "arch".into(),
            reason: "omega0 or skip layout differs".into(),
        });
    }
    Ok(params)
}

fn load_with_arch<T: Real>(dir: &Path, arch: &MlpArch, sigma: f64) -> Result<MlpParams<T>> {
    arch.validate()?;
    let read2 = |name: &str, dims: [usize; 2]| -> Result<Array2<T>> {
        let t = read_tensor(dir.join(name))?;
        t.expect_dims(&dims).map_err(|e| Error::Architecture {
            layer: name.trim_end_matches(".qkt").into(),
            reason: e.to_string(),
        })?;
        let v = t.as_real64()?.iter().map(|&x| T::of(x)).collect();
        Ok(Array2::from_shape_vec(dims, v).expect("dims checked"))
    };
    let b = read2("embedding.qkt", [COORD_DIM, arch.n_e])?;
    let mut layers = Vec::with_capacity(arch.depth);
    for l in 1..=arch.depth {
        let (i, o) = (arch.input_width(l), arch.output_width(l));
        let weight = read2(&format!("layer{l}_weight.qkt"), [i, o])?;
        let bt = read_tensor(dir.join(format!("layer{l}_bias.qkt")))?;
        bt.expect_dims(&[o]).map_err(|e| Error::Architecture {
            layer: format!("layer {l}"),
            reason: e.to_string(),
        })?;
        let bias = Array1::from_vec(bt.as_real64()?.iter().map(|&x| T::of(x)).collect());
        layers.push(Dense { weight, bias });
    }
    Ok(MlpParams {
        arch: arch.clone(),
        embedding: FourierEmbedding { b, sigma },
        layers,
    })
}
