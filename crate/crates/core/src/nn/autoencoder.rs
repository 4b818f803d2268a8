use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine map `x W + b` followed by an activation. `weight` is `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..=limit));
        Layer {
            weight,
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, input: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = input.matmul(&self.weight)?;
        z.add_row_vector(&self.bias);
        if self.activation != Activation::Identity {
            z.data_mut()
                .iter_mut()
                .for_each(|v| *v = self.activation.apply(*v));
        }
        Ok(z)
    }
}

/// Architecture of one autoencoder. The encoder runs
/// `input -> hidden[0] -> ... -> code`, the decoder mirrors it back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub code_dim: usize,
    pub hidden_activation: Activation,
    pub code_activation: Activation,
    pub output_activation: Activation,
    /// Applied to the input of the last encoder layer in train mode.
    pub dropout_rate: f64,
}

impl AutoencoderSpec {
    /// Tanh hidden layers, identity code and output layers.
    pub fn new(input_dim: usize, hidden: Vec<usize>, code_dim: usize, dropout_rate: f64) -> Self {
        AutoencoderSpec {
            input_dim,
            hidden,
            code_dim,
            hidden_activation: Activation::Tanh,
            code_activation: Activation::Identity,
            output_activation: Activation::Identity,
            dropout_rate,
        }
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.code_dim);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = self.encoder_widths();
        w.reverse();
        w
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.code_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Contract(
                "autoencoder widths must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Contract(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Encoder/decoder pair with hand-written backpropagation.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    spec: AutoencoderSpec,
    encoder: Vec<Layer>,
    decoder: Vec<Layer>,
    stamp: u64,
}

impl PartialEq for Autoencoder {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.encoder == other.encoder && self.decoder == other.decoder
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Gradients laid out like [`Autoencoder::parameters_mut`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Vec<LayerGrad>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|g| [g.weight.data(), g.bias.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// Activations recorded by [`Autoencoder::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    stamp: u64,
    enc_inputs: Vec<DenseMatrix>,
    enc_outputs: Vec<DenseMatrix>,
    dropout_mask: Option<DenseMatrix>,
    code_alpha: Option<f64>,
    code: DenseMatrix,
    dec_inputs: Vec<DenseMatrix>,
    dec_outputs: Vec<DenseMatrix>,
}

impl ForwardCache {
    /// Encoder output before any scaled-tanh transform.
    pub fn raw_code(&self) -> &DenseMatrix {
        self.enc_outputs.last().expect("encoder has layers")
    }

    /// Inverted-dropout multipliers (0 or `1/(1-p)`) applied before the last
    /// encoder layer; `None` in eval mode or when the rate is 0.
    pub fn dropout_mask(&self) -> Option<&DenseMatrix> {
        self.dropout_mask.as_ref()
    }

    /// Input of the last encoder layer before masking.
    pub fn pre_code_activations(&self) -> &DenseMatrix {
        let n = self.enc_outputs.len();
        if n >= 2 {
            &self.enc_outputs[n - 2]
        } else {
            &self.enc_inputs[0]
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Code fed to the decoder and the similarity losses (`tanh(αf)` when a
    /// scale is given, else `f`).
    pub code: DenseMatrix,
    pub reconstruction: DenseMatrix,
    pub cache: ForwardCache,
}

impl Autoencoder {
    pub fn new<R: Rng>(spec: AutoencoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let enc_w = spec.encoder_widths();
        let dec_w = spec.decoder_widths();
        let last = enc_w.len() - 2;
        let encoder = enc_w
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    spec.code_activation
                } else {
                    spec.hidden_activation
                };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        let decoder = dec_w
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    spec.output_activation
                } else {
                    spec.hidden_activation
                };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Ok(Autoencoder {
            spec,
            encoder,
            decoder,
            stamp: fresh_stamp(),
        })
    }

    /// Rebuilds an autoencoder from stored layers, checking they chain.
    pub fn from_layers(
        spec: AutoencoderSpec,
        encoder: Vec<Layer>,
        decoder: Vec<Layer>,
    ) -> Result<Self> {
        spec.validate()?;
        let check = |layers: &[Layer], widths: &[usize], what: &str| -> Result<()> {
            if layers.len() + 1 != widths.len() {
                return Err(Error::Shape(format!(
                    "{what}: {} layers for widths {widths:?}",
                    layers.len()
                )));
            }
            for (l, w) in layers.iter().zip(widths.windows(2)) {
                if l.weight.shape() != (w[0], w[1]) || l.bias.len() != w[1] {
                    return Err(Error::Shape(format!(
                        "{what}: layer {:?} vs {w:?}",
                        l.weight.shape()
                    )));
                }
            }
            Ok(())
        };
        check(&encoder, &spec.encoder_widths(), "encoder")?;
        check(&decoder, &spec.decoder_widths(), "decoder")?;
        Ok(Autoencoder {
            spec,
            encoder,
            decoder,
            stamp: fresh_stamp(),
        })
    }

    pub fn spec(&self) -> &AutoencoderSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &[Layer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[Layer] {
        &self.decoder
    }

    /// Mutable layer access; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> (&mut [Layer], &mut [Layer]) {
        self.stamp = fresh_stamp();
        (&mut self.encoder, &mut self.decoder)
    }

    pub fn code_dim(&self) -> usize {
        self.spec.code_dim
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Flat parameter buffers: weight then bias, encoder layers then decoder
    /// layers. Invalidates outstanding caches.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.stamp = fresh_stamp();
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Runs encoder and decoder. In train mode an inverted-dropout mask drawn
    /// from `seed` is applied to the input of the last encoder layer. With
    /// `code_alpha = Some(α)` the code is `tanh(α f)` and the decoder consumes
    /// that.
    pub fn forward(
        &self,
        x: &DenseMatrix,
        mode: Mode,
        code_alpha: Option<f64>,
        seed: u64,
    ) -> Result<ForwardPass> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, autoencoder expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        if let Some(a) = code_alpha {
            if !(a > 0.0) {
                return Err(Error::Contract(format!("scaled tanh needs α > 0, got {a}")));
            }
        }
        let n_enc = self.encoder.len();
        let mut enc_inputs = Vec::with_capacity(n_enc);
        let mut enc_outputs: Vec<DenseMatrix> = Vec::with_capacity(n_enc);
        let mut dropout_mask = None;
        for (i, layer) in self.encoder.iter().enumerate() {
            let mut input = if i == 0 {
                x.clone()
            } else {
                enc_outputs[i - 1].clone()
            };
            if i == n_enc - 1 && mode == Mode::Train && self.spec.dropout_rate > 0.0 {
                let p = self.spec.dropout_rate;
                let keep_scale = 1.0 / (1.0 - p);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mask = DenseMatrix::from_fn(input.rows(), input.cols(), |_, _| {
                    if rng.gen::<f64>() < p {
                        0.0
                    } else {
                        keep_scale
                    }
                });
                for (v, m) in input.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
                dropout_mask = Some(mask);
            }
            let out = layer.forward(&input)?;
            enc_inputs.push(input);
            enc_outputs.push(out);
        }
        let raw = enc_outputs.last().expect("encoder has layers");
        let code = match code_alpha {
            Some(a) => raw.map(|v| (a * v).tanh()),
            None => raw.clone(),
        };
        let mut dec_inputs = Vec::with_capacity(self.decoder.len());
        let mut dec_outputs: Vec<DenseMatrix> = Vec::with_capacity(self.decoder.len());
        for (i, layer) in self.decoder.iter().enumerate() {
            let input = if i == 0 {
                code.clone()
            } else {
                dec_outputs[i - 1].clone()
            };
            let out = layer.forward(&input)?;
            dec_inputs.push(input);
            dec_outputs.push(out);
        }
        let reconstruction = dec_outputs.last().expect("decoder has layers").clone();
        Ok(ForwardPass {
            code: code.clone(),
            reconstruction,
            cache: ForwardCache {
                stamp: self.stamp,
                enc_inputs,
                enc_outputs,
                dropout_mask,
                code_alpha,
                code,
                dec_inputs,
                dec_outputs,
            },
        })
    }

    /// Eval-mode code only (no decoder pass).
    pub fn encode(&self, x: &DenseMatrix, code_alpha: Option<f64>) -> Result<DenseMatrix> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, autoencoder expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let mut h = x.clone();
        for layer in &self.encoder {
            h = layer.forward(&h)?;
        }
        if let Some(a) = code_alpha {
            h = h.map(|v| (a * v).tanh());
        }
        Ok(h)
    }

    /// Backpropagates upstream gradients with respect to the code (as
    /// returned by `forward`) and the reconstruction.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_code: Option<&DenseMatrix>,
        d_reconstruction: Option<&DenseMatrix>,
    ) -> Result<Gradients> {
        if cache.stamp != self.stamp {
            return Err(Error::Contract(
                "forward cache is stale: parameters changed since the forward pass".into(),
            ));
        }
        let batch = cache.code.rows();
        let mut dec_grads = Vec::with_capacity(self.decoder.len());
        let mut d_code_total = match d_reconstruction {
            Some(d_out) => {
                if d_out.shape() != cache.dec_outputs.last().unwrap().shape() {
                    return Err(Error::Shape("reconstruction gradient shape".into()));
                }
                let mut upstream = d_out.clone();
                for (i, layer) in self.decoder.iter().enumerate().rev() {
                    let delta = activation_delta(upstream, &cache.dec_outputs[i], layer.activation);
                    dec_grads.push(LayerGrad {
                        weight: cache.dec_inputs[i].t_matmul(&delta)?,
                        bias: delta.column_sums(),
                    });
                    upstream = delta.matmul_t(&layer.weight)?;
                }
                dec_grads.reverse();
                upstream
            }
            None => {
                dec_grads = self
                    .decoder
                    .iter()
                    .map(|l| LayerGrad {
                        weight: DenseMatrix::zeros(l.input_dim(), l.output_dim()),
                        bias: vec![0.0; l.output_dim()],
                    })
                    .collect();
                DenseMatrix::zeros(batch, self.spec.code_dim)
            }
        };
        if let Some(dc) = d_code {
            d_code_total.add_scaled(dc, 1.0)?;
        }
        if let Some(a) = cache.code_alpha {
            for (g, h) in d_code_total.data_mut().iter_mut().zip(cache.code.data()) {
                *g *= a * (1.0 - h * h);
            }
        }
        let mut enc_grads = Vec::with_capacity(self.encoder.len());
        let mut upstream = d_code_total;
        let n_enc = self.encoder.len();
        for (i, layer) in self.encoder.iter().enumerate().rev() {
            let delta = activation_delta(upstream, &cache.enc_outputs[i], layer.activation);
            enc_grads.push(LayerGrad {
                weight: cache.enc_inputs[i].t_matmul(&delta)?,
                bias: delta.column_sums(),
            });
            if i == 0 {
                break;
            }
            upstream = delta.matmul_t(&layer.weight)?;
            if i == n_enc - 1 {
                if let Some(mask) = &cache.dropout_mask {
                    for (g, m) in upstream.data_mut().iter_mut().zip(mask.data()) {
                        *g *= m;
                    }
                }
            }
        }
        enc_grads.reverse();
        Ok(Gradients {
            encoder: enc_grads,
            decoder: dec_grads,
        })
    }
}

fn activation_delta(
    mut upstream: DenseMatrix,
    output: &DenseMatrix,
    act: Activation,
) -> DenseMatrix {
    if act != Activation::Identity {
        for (g, y) in upstream.data_mut().iter_mut().zip(output.data()) {
            *g *= act.derivative_at_output(*y);
        }
    }
    upstream
}
