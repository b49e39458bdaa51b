use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::embedding::FourierEmbedding;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Layer layout of the coordinate network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Number of Fourier frequencies; the embedding has `2·n_e` features.
    pub n_e: usize,
    pub hidden: usize,
    /// Total number of layers including the affine output layer.
    pub depth: usize,
    /// 1-based layers whose output is concatenated with the embedding before
    /// the next layer.
    pub skips: Vec<usize>,
    pub omega0: f64,
}

impl MlpArch {
    /// Nine layers, 256 hidden units, embedding re-injected after layers 3, 5
    /// and 7.
    pub fn standard(n_e: usize, omega0: f64) -> Self {
        MlpArch {
            n_e,
            hidden: 256,
            depth: 9,
            skips: vec![3, 5, 7],
            omega0,
        }
    }

    pub fn embed_dim(&self) -> usize {
        2 * self.n_e
    }

    /// Input width of 1-based layer `l`.
    pub fn input_width(&self, l: usize) -> usize {
        if l == 1 {
            self.embed_dim()
        } else if self.skips.contains(&(l - 1)) {
            self.hidden + self.embed_dim()
        } else {
            self.hidden
        }
    }

    pub fn output_width(&self, l: usize) -> usize {
        if l == self.depth {
            2
        } else {
            self.hidden
        }
    }

    fn has_skip_input(&self, l: usize) -> bool {
        l > 1 && self.skips.contains(&(l - 1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Architecture {
            layer: "arch".into(),
            reason,
        };
        if self.depth < 2 || self.hidden == 0 || self.n_e == 0 {
            return Err(bad(format!(
                "need depth >= 2 and positive widths, got depth {} hidden {} n_e {}",
                self.depth, self.hidden, self.n_e
            )));
        }
        if let Some(s) = self.skips.iter().find(|&&s| s == 0 || s >= self.depth) {
            return Err(bad(format!("skip after layer {s} is outside 1..{}", self.depth)));
        }
        if !(self.omega0 > 0.0) {
            return Err(bad(format!("omega0 must be > 0, got {}", self.omega0)));
        }
        Ok(())
    }
}

/// Affine layer `z = a·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Deeper layers `U(±√(6/n_l)/ω0)`.
    #[default]
    Standard,
    /// Deeper layers `U(±ω0·√(6/n_l))`.
    PaperLiteral,
}

/// All trainable weights plus the frozen embedding and `ω0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub arch: MlpArch,
    pub embedding: FourierEmbedding<T>,
    pub layers: Vec<Dense<T>>,
}

/// Intermediate values kept by [`MlpParams::forward_train`].
pub struct ForwardCache<T> {
    /// `sin(ω0·z)` for each sine layer.
    hidden: Vec<Array2<T>>,
    /// `ω0·cos(ω0·z)` for each sine layer.
    dhidden: Vec<Array2<T>>,
}

impl<T: Real> MlpParams<T> {
    /// First layer `U(±1/(2n_e))` over its `2n_e` inputs; deeper layers per
    /// `scheme`; zero biases. The embedding and weights use separate streams
    /// of the same seed.
    pub fn init(arch: &MlpArch, sigma: f64, seed: u64, scheme: InitScheme) -> Result<Self> {
        arch.validate()?;
        let embedding = FourierEmbedding::new(arch.n_e, sigma, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut layers = Vec::with_capacity(arch.depth);
        for l in 1..=arch.depth {
            let (fan_in, fan_out) = (arch.input_width(l), arch.output_width(l));
            let bound = if l == 1 {
                1.0 / fan_in as f64
            } else {
                let base = (6.0 / fan_in as f64).sqrt();
                match scheme {
                    InitScheme::Standard => base / arch.omega0,
                    InitScheme::PaperLiteral => base * arch.omega0,
                }
            };
            let dist = Uniform::new(-bound, bound).expect("bound > 0");
            let weight = Array2::from_shape_fn((fan_in, fan_out), |_| T::of(dist.sample(&mut rng)));
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        Ok(MlpParams {
            arch: arch.clone(),
            embedding,
            layers,
        })
    }

    /// Same architecture and embedding, all trainable values zero.
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            arch: self.arch.clone(),
            embedding: self.embedding.clone(),
            layers: self
                .layers
                .iter()
                .map(|d| Dense::zeros(d.weight.nrows(), d.weight.ncols()))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|d| d.weight.len() + d.bias.len()).sum()
    }

    /// Trainable tensors in a fixed order: `W1, b1, W2, b2, …`.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|d| {
                [
                    d.weight.as_slice().expect("standard layout"),
                    d.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|d| {
                [
                    d.weight.as_slice_mut().expect("standard layout"),
                    d.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            arch: self.arch.clone(),
            embedding: FourierEmbedding {
                b: self.embedding.b.mapv(|v| U::of(v.as_f64())),
                sigma: self.embedding.sigma,
            },
            layers: self
                .layers
                .iter()
                .map(|d| Dense {
                    weight: d.weight.mapv(|v| U::of(v.as_f64())),
                    bias: d.bias.mapv(|v| U::of(v.as_f64())),
                })
                .collect(),
        }
    }

    fn check_input(&self, emb: &ArrayView2<T>) -> Result<()> {
        if emb.ncols() != self.arch.embed_dim() {
            return Err(Error::Shape(format!(
                "embedded batch has {} features, network expects {}",
                emb.ncols(),
                self.arch.embed_dim()
            )));
        }
        Ok(())
    }

    /// `z = [h, emb]·W + b` without materializing the concatenation.
    fn affine(&self, l: usize, h: Option<&Array2<T>>, emb: &ArrayView2<T>) -> Array2<T> {
        let layer = &self.layers[l - 1];
        let rows = emb.nrows();
        let mut z = Array2::from_shape_fn((rows, layer.bias.len()), |(_, j)| layer.bias[j]);
        match h {
            None => general_mat_mul(T::one(), emb, &layer.weight, T::one(), &mut z),
            Some(h) => {
                let hidden = h.ncols();
                general_mat_mul(
                    T::one(),
                    h,
                    &layer.weight.slice(s![..hidden, ..]),
                    T::one(),
                    &mut z,
                );
                if self.arch.has_skip_input(l) {
                    general_mat_mul(
                        T::one(),
                        emb,
                        &layer.weight.slice(s![hidden.., ..]),
                        T::one(),
                        &mut z,
                    );
                }
            }
        }
        z
    }

    /// Network output (`N × 2`, re/im) for an embedded batch.
    pub fn forward(&self, emb: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&emb)?;
        let mut h: Option<Array2<T>> = None;
        for l in 1..self.arch.depth {
            let mut z = self.affine(l, h.as_ref(), &emb);
            super::trig::sin_in_place(z.as_slice_mut().expect("standard layout"), self.arch.omega0);
            h = Some(z);
        }
        let out = self.affine(self.arch.depth, h.as_ref(), &emb);
        check_finite(&out)?;
        Ok(out)
    }

    /// Forward pass that keeps what [`backward`](Self::backward) needs.
    pub fn forward_train(&self, emb: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(&emb)?;
        let mut hidden: Vec<Array2<T>> = Vec::with_capacity(self.arch.depth - 1);
        let mut dhidden = Vec::with_capacity(self.arch.depth - 1);
        for l in 1..self.arch.depth {
            let mut z = self.affine(l, hidden.last(), &emb);
            let mut dz = Array2::zeros(z.raw_dim());
            super::trig::sin_cos_in_place(
                z.as_slice_mut().expect("standard layout"),
                dz.as_slice_mut().expect("standard layout"),
                self.arch.omega0,
            );
            hidden.push(z);
            dhidden.push(dz);
        }
        let out = self.affine(self.arch.depth, hidden.last(), &emb);
        check_finite(&out)?;
        Ok((out, ForwardCache { hidden, dhidden }))
    }

    /// Gradients of `Σ_i upstream_i · out_i` with respect to every weight and
    /// bias. The embedding is frozen and receives none.
    pub fn backward(
        &self,
        emb: ArrayView2<T>,
        cache: &ForwardCache<T>,
        upstream: ArrayView2<T>,
    ) -> Result<MlpParams<T>> {
        let depth = self.arch.depth;
        if upstream.dim() != (emb.nrows(), 2) || cache.hidden.len() != depth - 1 {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match batch of {} rows",
                upstream.dim(),
                emb.nrows()
            )));
        }
        let mut grads = self.zeros_like();
        let mut delta = upstream.to_owned();
        for l in (1..=depth).rev() {
            if l < depth {
                delta *= &cache.dhidden[l - 1];
            }
            let g = &mut grads.layers[l - 1];
            g.bias = delta.sum_axis(Axis(0));
            let w = &self.layers[l - 1].weight;
            if l == 1 {
                general_mat_mul(T::one(), &emb.t(), &delta, T::zero(), &mut g.weight);
                break;
            }
            let h_prev = &cache.hidden[l - 2];
            let hidden = h_prev.ncols();
            general_mat_mul(
                T::one(),
                &h_prev.t(),
                &delta,
                T::zero(),
                &mut g.weight.slice_mut(s![..hidden, ..]),
            );
            if self.arch.has_skip_input(l) {
                general_mat_mul(
                    T::one(),
                    &emb.t(),
                    &delta,
                    T::zero(),
                    &mut g.weight.slice_mut(s![hidden.., ..]),
                );
            }
            delta = delta.dot(&w.slice(s![..hidden, ..]).t());
        }
        Ok(grads)
    }

    /// Complex values, one per row of `emb`.
    pub fn predict(&self, emb: ArrayView2<T>) -> Result<Vec<Complex<T>>> {
        Ok(to_complex(&self.forward(emb)?))
    }
}

pub(crate) fn to_complex<T: Real>(out: &Array2<T>) -> Vec<Complex<T>> {
    out.axis_iter(Axis(0))
        .map(|r| Complex::new(r[0], r[1]))
        .collect()
}

fn check_finite<T: Real>(a: &Array2<T>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("network output (training diverged)".into()))
    }
}
