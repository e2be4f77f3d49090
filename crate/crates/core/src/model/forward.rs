use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{ModelConfig, ModelWeights, TokenSequence};
use crate::error::{Error, Result};
use crate::instrument::{apply_ablation_in_place, AblationPlan, ActivationRecord, CaptureMode, CaptureRequest};
use crate::tensor::{argmax, check_finite, gelu, layernorm_row, matmul_into, softmax_in_place, Real, Tensor};

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub record: Option<ActivationRecord>,
}

/// Borrowed view of one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerParams<'a, R> {
    pub ln1_gain: &'a [R],
    pub ln1_bias: &'a [R],
    pub w_q: &'a [R],
    pub w_k: &'a [R],
    pub w_v: &'a [R],
    pub w_o: &'a [R],
    pub ln2_gain: &'a [R],
    pub ln2_bias: &'a [R],
    pub mlp_in: &'a [R],
    pub mlp_in_bias: &'a [R],
    pub mlp_out: &'a [R],
    pub mlp_out_bias: &'a [R],
}

/// Borrowed view of all parameters, in any [`Real`] precision.
#[derive(Debug, Clone)]
pub(crate) struct Params<'a, R> {
    pub config: ModelConfig,
    pub tok_emb: &'a [R],
    pub pos_emb: &'a [R],
    pub layers: Vec<LayerParams<'a, R>>,
    pub lnf_gain: &'a [R],
    pub lnf_bias: &'a [R],
    pub unembed: &'a [R],
}

impl<'a, R: Real> Params<'a, R> {
    /// Builds a view from slices in [`super::tensor_layout`] order.
    pub fn from_slices(config: ModelConfig, slices: &[&'a [R]]) -> Self {
        let n = slices.len();
        debug_assert_eq!(n, 5 + 12 * config.n_layers);
        let layers = slices[2..n - 3]
            .chunks_exact(12)
            .map(|s| LayerParams {
                ln1_gain: s[0],
                ln1_bias: s[1],
                w_q: s[2],
                w_k: s[3],
                w_v: s[4],
                w_o: s[5],
                ln2_gain: s[6],
                ln2_bias: s[7],
                mlp_in: s[8],
                mlp_in_bias: s[9],
                mlp_out: s[10],
                mlp_out_bias: s[11],
            })
            .collect();
        Params {
            config,
            tok_emb: slices[0],
            pos_emb: slices[1],
            layers,
            lnf_gain: slices[n - 3],
            lnf_bias: slices[n - 2],
            unembed: slices[n - 1],
        }
    }
}

impl ModelWeights {
    pub(crate) fn params(&self) -> Params<'_, f32> {
        let slices: Vec<&[f32]> = self.tensors().into_iter().map(|t| t.data()).collect();
        Params::from_slices(*self.config(), &slices)
    }
}

/// Intermediate values of one layer, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerCache<R> {
    pub x_in: Vec<R>,
    pub h1: Vec<R>,
    pub ln1_stats: Vec<(R, R)>,
    pub q: Vec<R>,
    pub k: Vec<R>,
    pub v: Vec<R>,
    /// `[head][query][key]`, zero above the diagonal.
    pub att: Vec<R>,
    pub z: Vec<R>,
    pub x_mid: Vec<R>,
    pub h2: Vec<R>,
    pub ln2_stats: Vec<(R, R)>,
    pub u: Vec<R>,
    pub g: Vec<R>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardCache<R> {
    pub layers: Vec<LayerCache<R>>,
    pub x_final: Vec<R>,
    pub xf: Vec<R>,
    pub lnf_stats: Vec<(R, R)>,
}

pub(crate) fn layernorm_rows<R: Real>(x: &[R], gain: &[R], bias: &[R], d: usize) -> (Vec<R>, Vec<(R, R)>) {
    let mut out = vec![R::zero(); x.len()];
    let stats = x
        .chunks_exact(d)
        .zip(out.chunks_exact_mut(d))
        .map(|(xr, yr)| layernorm_row(xr, gain, bias, yr))
        .collect();
    (out, stats)
}

/// `x[rows × d_in] · w[d_in × d_out] (+ bias)`.
pub(crate) fn linear<R: Real>(x: &[R], w: &[R], bias: Option<&[R]>, rows: usize) -> Vec<R> {
    let d_in = x.len() / rows;
    let d_out = w.len() / d_in;
    let mut out = vec![R::zero(); rows * d_out];
    matmul_into(x, w, rows, d_in, d_out, &mut out);
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(d_out) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    out
}

/// Scaled causal multi-head attention. Returns the pre-out activations
/// `[T × d_model]` and the attention weights `[H × T × T]`.
pub(crate) fn causal_attention<R: Real>(
    q: &[R],
    k: &[R],
    v: &[R],
    t: usize,
    n_heads: usize,
    d_head: usize,
) -> (Vec<R>, Vec<R>) {
    let d = n_heads * d_head;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut att = vec![R::zero(); n_heads * t * t];
    let mut z = vec![R::zero(); t * d];
    let mut acc = vec![0.0f64; d_head];
    for h in 0..n_heads {
        let off = h * d_head;
        for i in 0..t {
            let row = &mut att[(h * t + i) * t..(h * t + i + 1) * t];
            let qi = &q[i * d + off..i * d + off + d_head];
            for (j, a) in row[..=i].iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + d_head];
                let s: f64 = qi.iter().zip(kj).map(|(&x, &y)| x.to_f64() * y.to_f64()).sum();
                *a = R::from_f64(s * scale);
            }
            softmax_in_place(&mut row[..=i]);
            acc.fill(0.0);
            for (j, &a) in row[..=i].iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + d_head];
                for (s, &x) in acc.iter_mut().zip(vj) {
                    *s += a.to_f64() * x.to_f64();
                }
            }
            for (o, &s) in z[i * d + off..i * d + off + d_head].iter_mut().zip(&acc) {
                *o = R::from_f64(s);
            }
        }
    }
    (z, att)
}

fn add<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub(crate) fn run<R: Real>(
    params: &Params<'_, R>,
    tokens: &TokenSequence,
    plan: Option<&AblationPlan>,
    capture: Option<&CaptureRequest>,
    mut cache: Option<&mut ForwardCache<R>>,
) -> Result<(Vec<R>, Option<ActivationRecord>)> {
    let cfg = &params.config;
    tokens.validate(cfg)?;
    if tokens.is_empty() {
        return Err(Error::Shape("empty token sequence".into()));
    }
    if let Some(p) = plan {
        p.validate_for(cfg)?;
    }
    if let Some(c) = capture {
        c.validate_for(cfg)?;
    }
    let (t, d) = (tokens.len(), cfg.d_model);

    let mut x = vec![R::zero(); t * d];
    for (pos, (row, &id)) in x.chunks_exact_mut(d).zip(tokens.ids()).enumerate() {
        let e = &params.tok_emb[id as usize * d..(id as usize + 1) * d];
        let p = &params.pos_emb[pos * d..(pos + 1) * d];
        for ((o, &a), &b) in row.iter_mut().zip(e).zip(p) {
            *o = a + b;
        }
    }

    let mut record = capture.map(|c| ActivationRecord::empty(c, t, d));
    if let Some(c) = cache.as_deref_mut() {
        c.layers.clear();
    }

    for (l, lw) in params.layers.iter().enumerate() {
        let (h1, ln1_stats) = layernorm_rows(&x, lw.ln1_gain, lw.ln1_bias, d);
        let q = linear(&h1, lw.w_q, None, t);
        let k = linear(&h1, lw.w_k, None, t);
        let vv = linear(&h1, lw.w_v, None, t);
        let (mut z, att) = causal_attention(&q, &k, &vv, t, cfg.n_heads, cfg.d_head());

        if let (Some(rec), Some(CaptureMode::Raw)) = (record.as_mut(), capture.map(|c| c.mode)) {
            rec.store(l, &z);
        }
        if let Some(p) = plan {
            apply_ablation_in_place(&mut z, t, d, l, p);
        }
        if let (Some(rec), Some(CaptureMode::Ablated)) = (record.as_mut(), capture.map(|c| c.mode)) {
            rec.store(l, &z);
        }

        let attn_out = linear(&z, lw.w_o, None, t);
        let x_mid = add(&x, &attn_out);
        let (h2, ln2_stats) = layernorm_rows(&x_mid, lw.ln2_gain, lw.ln2_bias, d);
        let u = linear(&h2, lw.mlp_in, Some(lw.mlp_in_bias), t);
        let g: Vec<R> = u.iter().map(|&a| gelu(a)).collect();
        let m = linear(&g, lw.mlp_out, Some(lw.mlp_out_bias), t);
        let x_out = add(&x_mid, &m);

        if let Some(c) = cache.as_deref_mut() {
            c.layers.push(LayerCache {
                x_in: std::mem::take(&mut x),
                h1,
                ln1_stats,
                q,
                k,
                v: vv,
                att,
                z,
                x_mid,
                h2,
                ln2_stats,
                u,
                g,
            });
        }
        x = x_out;
    }

    let (xf, lnf_stats) = layernorm_rows(&x, params.lnf_gain, params.lnf_bias, d);
    let logits = linear(&xf, params.unembed, None, t);
    check_finite(&logits, "logits")?;
    if let Some(c) = cache {
        c.x_final = x;
        c.xf = xf;
        c.lnf_stats = lnf_stats;
    }
    Ok((logits, record))
}

/// Causal forward pass over one sequence.
///
/// `plan` replaces pre-out activations before `W_O`; `capture` records
/// them at the requested layers (raw or post-replacement).
pub fn forward(
    weights: &ModelWeights,
    tokens: &TokenSequence,
    plan: Option<&AblationPlan>,
    capture: Option<&CaptureRequest>,
) -> Result<ForwardOutput> {
    let (logits, record) = run(&weights.params(), tokens, plan, capture, None)?;
    let shape = vec![tokens.len(), weights.config().vocab_size];
    Ok(ForwardOutput {
        logits: Tensor::from_raw(shape, logits),
        record,
    })
}

pub fn logits(weights: &ModelWeights, tokens: &TokenSequence) -> Result<Tensor> {
    Ok(forward(weights, tokens, None, None)?.logits)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenerateMode {
    Greedy,
    Sample { temperature: f32, seed: u64 },
}

/// Autoregressive continuation of `seed_tokens` by `length` tokens.
pub fn generate(
    weights: &ModelWeights,
    seed_tokens: &TokenSequence,
    length: usize,
    mode: GenerateMode,
) -> Result<TokenSequence> {
    let cfg = weights.config();
    if seed_tokens.len() + length > cfg.max_seq {
        return Err(Error::SequenceTooLong {
            len: seed_tokens.len() + length,
            max: cfg.max_seq,
        });
    }
    seed_tokens.validate(cfg)?;
    if length == 0 {
        return Ok(seed_tokens.clone());
    }
    if seed_tokens.is_empty() {
        return Err(Error::Config("generation needs at least one seed token".into()));
    }
    let mut rng = match mode {
        GenerateMode::Sample { temperature, seed } => {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::Config(format!("temperature {temperature} must be positive")));
            }
            Some(Xoshiro256PlusPlus::seed_from_u64(seed))
        }
        GenerateMode::Greedy => None,
    };
    let mut seq = seed_tokens.clone();
    for _ in 0..length {
        let out = logits(weights, &seq)?;
        let last = out.row(seq.len() - 1);
        let next = match (mode, rng.as_mut()) {
            (GenerateMode::Sample { temperature, .. }, Some(rng)) => {
                sample(last, temperature as f64, rng.random::<f64>())
            }
            _ => argmax(last),
        };
        seq.0.push(next as u32);
    }
    Ok(seq)
}

/// Inverse-CDF draw from `softmax(logits / temperature)` with uniform `u`.
fn sample(logits: &[f32], temperature: f64, u: f64) -> usize {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let weights: Vec<f64> = logits
        .iter()
        .map(|&l| ((l as f64 - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = u * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}
