//! Desk-scale pre-norm decoder-only transformer over a byte vocabulary.
//!
//! Activations are row vectors: a linear layer computes `x · W` with `W`
//! stored `[d_in × d_out]`. The attention pre-out site (the concatenated,
//! softmax-weighted value sums of every head, right before `W_O`) is where
//! ablation plans are applied and activations are captured; see
//! [`crate::instrument`].

mod container;
mod forward;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use container::{
    blob_hash, load_weights, read_container, save_weights, write_container, ContainerHeader,
    TensorEntry,
};
pub use forward::{forward, generate, logits, ForwardOutput, GenerateMode};
pub(crate) use forward::{run, ForwardCache, Params};

pub const BYTE_VOCAB: usize = 256;
pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const MIN_VOCAB: usize = 259;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            vocab_size: MIN_VOCAB,
            max_seq: 256,
            mlp_ratio: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.mlp_ratio == 0 {
            return fail(format!("zero-sized model dimension in {self:?}"));
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.vocab_size < MIN_VOCAB {
            return fail(format!("vocab_size {} < {MIN_VOCAB}", self.vocab_size));
        }
        if self.max_seq < 2 {
            return fail(format!("max_seq {} < 2", self.max_seq));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn d_mlp(&self) -> usize {
        self.d_model * self.mlp_ratio
    }

    /// Number of attention pre-out neurons across all layers.
    pub fn n_neurons(&self) -> usize {
        self.n_layers * self.d_model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub mlp_in: Tensor,
    pub mlp_in_bias: Tensor,
    pub mlp_out: Tensor,
    pub mlp_out_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<LayerWeights>,
    pub lnf_gain: Tensor,
    pub lnf_bias: Tensor,
    pub unembed: Tensor,
}

/// Canonical tensor names and shapes for a config, in storage order.
pub fn tensor_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, v, f) = (config.d_model, config.vocab_size, config.d_mlp());
    let mut out = vec![
        ("tok_emb".to_string(), vec![v, d]),
        ("pos_emb".to_string(), vec![config.max_seq, d]),
    ];
    for l in 0..config.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        out.extend([
            (p("ln1.gain"), vec![d]),
            (p("ln1.bias"), vec![d]),
            (p("attn.w_q"), vec![d, d]),
            (p("attn.w_k"), vec![d, d]),
            (p("attn.w_v"), vec![d, d]),
            (p("attn.w_o"), vec![d, d]),
            (p("ln2.gain"), vec![d]),
            (p("ln2.bias"), vec![d]),
            (p("mlp.w_in"), vec![d, f]),
            (p("mlp.b_in"), vec![f]),
            (p("mlp.w_out"), vec![f, d]),
            (p("mlp.b_out"), vec![d]),
        ]);
    }
    out.extend([
        ("lnf.gain".to_string(), vec![d]),
        ("lnf.bias".to_string(), vec![d]),
        ("unembed".to_string(), vec![d, v]),
    ]);
    out
}

fn is_gain(name: &str) -> bool {
    name.ends_with(".gain")
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".bias") || name.ends_with(".b_in") || name.ends_with(".b_out")
}

impl ModelWeights {
    /// Gaussian `N(0, sigma²)` matrices, unit layer-norm gains, zero biases.
    pub fn init(config: ModelConfig, sigma: f32, seed: u64) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0f32, sigma)
            .map_err(|e| Error::Config(format!("init scale {sigma}: {e}")))?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let tensors = tensor_layout(&config)
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let data = if is_gain(&name) {
                    vec![1.0; len]
                } else if is_bias(&name) {
                    vec![0.0; len]
                } else {
                    (0..len).map(|_| normal.sample(&mut rng)).collect()
                };
                Tensor::new(shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_tensors(config, tensors)
    }

    /// Assembles weights from tensors in [`tensor_layout`] order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = tensor_layout(&config);
        if tensors.len() != layout.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        let tok_emb = next();
        let pos_emb = next();
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                ln1_gain: next(),
                ln1_bias: next(),
                w_q: next(),
                w_k: next(),
                w_v: next(),
                w_o: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                mlp_in: next(),
                mlp_in_bias: next(),
                mlp_out: next(),
                mlp_out_bias: next(),
            })
            .collect();
        Ok(ModelWeights {
            config,
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: next(),
            lnf_bias: next(),
            unembed: next(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All tensors in [`tensor_layout`] order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain,
                &l.ln1_bias,
                &l.w_q,
                &l.w_k,
                &l.w_v,
                &l.w_o,
                &l.ln2_gain,
                &l.ln2_bias,
                &l.mlp_in,
                &l.mlp_in_bias,
                &l.mlp_out,
                &l.mlp_out_bias,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.unembed]);
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.w_q,
                &mut l.w_k,
                &mut l.w_v,
                &mut l.w_o,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.mlp_in,
                &mut l.mlp_in_bias,
                &mut l.mlp_out,
                &mut l.mlp_out_bias,
            ]);
        }
        out.extend([&mut self.lnf_gain, &mut self.lnf_bias, &mut self.unembed]);
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        tensor_layout(&self.config)
            .into_iter()
            .map(|(name, _)| name)
            .zip(self.tensors())
            .collect()
    }

    /// Whether decoupled weight decay applies (matrices and embeddings only).
    pub(crate) fn decays(name: &str) -> bool {
        !is_gain(name) && !is_bias(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// SHA-256 of the little-endian parameter blob, hex encoded.
    pub fn content_hash(&self) -> String {
        blob_hash(&container::encode_blob(&self.tensors()))
    }
}

/// Token ids for one sequence; validated against a vocabulary at use time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.0.len() > config.max_seq {
            return Err(Error::SequenceTooLong {
                len: self.0.len(),
                max: config.max_seq,
            });
        }
        match self.0.iter().find(|&&id| id as usize >= config.vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                vocab: config.vocab_size,
            }),
            None => Ok(()),
        }
    }
}

/// Byte `b` becomes token `b`.
pub fn tokenize(text: &[u8]) -> TokenSequence {
    TokenSequence(text.iter().map(|&b| b as u32).collect())
}

/// Inverse of [`tokenize`]; special tokens carry no bytes and are dropped.
pub fn detokenize(tokens: &TokenSequence) -> Vec<u8> {
    tokens
        .0
        .iter()
        .filter(|&&id| (id as usize) < BYTE_VOCAB)
        .map(|&id| id as u8)
        .collect()
}

/// Splits a byte corpus into consecutive, non-overlapping sequences of at
/// most `seq_len` tokens, stopping once `max_tokens` tokens are taken.
pub fn chunk_corpus(bytes: &[u8], seq_len: usize, max_tokens: usize) -> Vec<TokenSequence> {
    let take = bytes.len().min(max_tokens);
    bytes[..take]
        .chunks(seq_len.max(1))
        .map(tokenize)
        .collect()
}
