//! Manual backpropagation through the fixed architecture and an AdamW loop.
//!
//! [`backward`] computes exact gradients of the mean next-token
//! cross-entropy over a batch of token windows. Per-sequence gradients are
//! computed independently (optionally in parallel) and summed in batch
//! order, so serial and parallel runs produce identical bits.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{run, tensor_layout, ForwardCache, ModelConfig, ModelWeights, Params, TokenSequence};
use crate::tensor::{gelu_grad, matmul_nt, matmul_tn_acc, nll, softmax_in_place, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub init_scale: f32,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f32>,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            steps: 2000,
            batch_size: 16,
            seq_len: 128,
            init_scale: 0.02,
            seed: 0,
            grad_clip: Some(1.0),
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let rates_ok = self.learning_rate >= 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.init_scale > 0.0;
        if !rates_ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        if self.steps == 0 || self.batch_size == 0 || self.seq_len == 0 {
            return Err(Error::Config("steps, batch_size and seq_len must be >= 1".into()));
        }
        if self.seq_len > model.max_seq {
            return Err(Error::Config(format!(
                "seq_len {} exceeds max_seq {}",
                self.seq_len, model.max_seq
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<(usize, f32)>,
}

impl LossCurve {
    pub fn last(&self) -> Option<f32> {
        self.points.last().map(|p| p.1)
    }
}

/// Gradients share the weight layout.
pub type Gradients = ModelWeights;

/// Gradient buffers in [`tensor_layout`] order.
type GradBufs<R> = Vec<Vec<R>>;

const LNF_GAIN: usize = 3;
const LNF_BIAS: usize = 2;
const UNEMBED: usize = 1;

fn layer_base(l: usize) -> usize {
    2 + 12 * l
}

/// Mutable access to two distinct buffers at once.
fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    debug_assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Backward through layer norm for one row, accumulating gain/bias grads.
fn layernorm_backward<R: Real>(
    x: &[R],
    (mean, rstd): (R, R),
    gain: &[R],
    dy: &[R],
    dgain: &mut [f64],
    dbias: &mut [f64],
    dx: &mut [R],
) {
    let n = x.len() as f64;
    let (mean, rstd) = (mean.to_f64(), rstd.to_f64());
    let mut sum_dxhat = 0.0f64;
    let mut sum_dxhat_xhat = 0.0f64;
    for i in 0..x.len() {
        let xhat = (x[i].to_f64() - mean) * rstd;
        let dxhat = dy[i].to_f64() * gain[i].to_f64();
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        dgain[i] += dy[i].to_f64() * xhat;
        dbias[i] += dy[i].to_f64();
    }
    let (m1, m2) = (sum_dxhat / n, sum_dxhat_xhat / n);
    for i in 0..x.len() {
        let xhat = (x[i].to_f64() - mean) * rstd;
        let dxhat = dy[i].to_f64() * gain[i].to_f64();
        dx[i] += R::from_f64(rstd * (dxhat - m1 - xhat * m2));
    }
}

#[allow(clippy::too_many_arguments)]
fn layernorm_rows_backward<R: Real>(
    x: &[R],
    stats: &[(R, R)],
    gain: &[R],
    dy: &[R],
    dgain: &mut [R],
    dbias: &mut [R],
    dx: &mut [R],
) {
    let d = gain.len();
    let (mut g_acc, mut b_acc) = (vec![0.0f64; d], vec![0.0f64; d]);
    for (t, &s) in stats.iter().enumerate() {
        let r = t * d..(t + 1) * d;
        layernorm_backward(&x[r.clone()], s, gain, &dy[r.clone()], &mut g_acc, &mut b_acc, &mut dx[r]);
    }
    for (o, v) in dgain.iter_mut().zip(g_acc) {
        *o += R::from_f64(v);
    }
    for (o, v) in dbias.iter_mut().zip(b_acc) {
        *o += R::from_f64(v);
    }
}

fn add_bias_grad<R: Real>(dy: &[R], width: usize, db: &mut [R]) {
    let mut acc = vec![0.0f64; width];
    for row in dy.chunks_exact(width) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v.to_f64();
        }
    }
    for (o, a) in db.iter_mut().zip(acc) {
        *o += R::from_f64(a);
    }
}

/// Gradient and summed NLL of one window (`tokens[..n-1]` predicts
/// `tokens[1..]`), with the loss scaled by `scale` before differentiation.
fn sequence_backward<R: Real>(params: &Params<'_, R>, window: &[u32], scale: f64) -> Result<(GradBufs<R>, f64)> {
    let cfg = params.config;
    let (d, v, f, hn, dh) = (cfg.d_model, cfg.vocab_size, cfg.d_mlp(), cfg.n_heads, cfg.d_head());
    let input = TokenSequence(window[..window.len() - 1].to_vec());
    let targets = &window[1..];
    let t = input.len();
    let mut cache = ForwardCache::default();
    let (mut dlogits, _) = run(params, &input, None, None, Some(&mut cache))?;
    let mut grads: GradBufs<R> = tensor_layout(&cfg)
        .iter()
        .map(|(_, s)| vec![R::zero(); s.iter().product()])
        .collect();
    let n = grads.len();

    // dL/dlogits = scale * (softmax - onehot)
    let mut nll_sum = 0.0f64;
    for (row, &target) in dlogits.chunks_exact_mut(v).zip(targets) {
        if target as usize >= v {
            return Err(Error::TokenOutOfRange { id: target, vocab: v });
        }
        nll_sum += nll(row, target as usize);
        softmax_in_place(row);
        row[target as usize] = row[target as usize] - R::one();
        for x in row.iter_mut() {
            *x = R::from_f64(x.to_f64() * scale);
        }
    }

    matmul_tn_acc(&cache.xf, &dlogits, t, d, v, &mut grads[n - UNEMBED]);
    let mut dxf = vec![R::zero(); t * d];
    matmul_nt(&dlogits, params.unembed, t, v, d, &mut dxf);
    let mut dx = vec![R::zero(); t * d];
    let (dg, db) = pair_mut(&mut grads, n - LNF_GAIN, n - LNF_BIAS);
    layernorm_rows_backward(&cache.x_final, &cache.lnf_stats, params.lnf_gain, &dxf, dg, db, &mut dx);

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let lw = &params.layers[l];
        let lg = &mut grads[layer_base(l)..layer_base(l + 1)];

        // MLP: x_out = x_mid + gelu(h2 W1 + b1) W2 + b2
        matmul_tn_acc(&lc.g, &dx, t, f, d, &mut lg[10]);
        add_bias_grad(&dx, d, &mut lg[11]);
        let mut du = vec![R::zero(); t * f];
        matmul_nt(&dx, lw.mlp_out, t, d, f, &mut du);
        for (g, &u) in du.iter_mut().zip(&lc.u) {
            *g = *g * gelu_grad(u);
        }
        matmul_tn_acc(&lc.h2, &du, t, d, f, &mut lg[8]);
        add_bias_grad(&du, f, &mut lg[9]);
        let mut dh2 = vec![R::zero(); t * d];
        matmul_nt(&du, lw.mlp_in, t, f, d, &mut dh2);
        let mut dx_mid = dx.clone();
        let (dg, db) = pair_mut(lg, 6, 7);
        layernorm_rows_backward(&lc.x_mid, &lc.ln2_stats, lw.ln2_gain, &dh2, dg, db, &mut dx_mid);

        // attention: x_mid = x_in + z W_O
        matmul_tn_acc(&lc.z, &dx_mid, t, d, d, &mut lg[5]);
        let mut dz = vec![R::zero(); t * d];
        matmul_nt(&dx_mid, lw.w_o, t, d, d, &mut dz);

        let (dq, dk, dv) = attention_backward(&lc.q, &lc.k, &lc.v, &lc.att, &dz, t, hn, dh);
        matmul_tn_acc(&lc.h1, &dq, t, d, d, &mut lg[2]);
        matmul_tn_acc(&lc.h1, &dk, t, d, d, &mut lg[3]);
        matmul_tn_acc(&lc.h1, &dv, t, d, d, &mut lg[4]);
        let mut dh1 = vec![R::zero(); t * d];
        let mut tmp = vec![R::zero(); t * d];
        for (dproj, w) in [(&dq, lw.w_q), (&dk, lw.w_k), (&dv, lw.w_v)] {
            matmul_nt(dproj, w, t, d, d, &mut tmp);
            for (a, &b) in dh1.iter_mut().zip(&tmp) {
                *a += b;
            }
        }
        let mut dx_in = dx_mid;
        let (dg, db) = pair_mut(lg, 0, 1);
        layernorm_rows_backward(&lc.x_in, &lc.ln1_stats, lw.ln1_gain, &dh1, dg, db, &mut dx_in);
        dx = dx_in;
    }

    for (pos, (&id, row)) in input.ids().iter().zip(dx.chunks_exact(d)).enumerate() {
        let e = &mut grads[0][id as usize * d..(id as usize + 1) * d];
        for (a, &b) in e.iter_mut().zip(row) {
            *a += b;
        }
        let p = &mut grads[1][pos * d..(pos + 1) * d];
        for (a, &b) in p.iter_mut().zip(row) {
            *a += b;
        }
    }
    Ok((grads, nll_sum))
}

/// Returns `(dq, dk, dv)` for scaled causal attention.
#[allow(clippy::too_many_arguments)]
fn attention_backward<R: Real>(
    q: &[R],
    k: &[R],
    v: &[R],
    att: &[R],
    dz: &[R],
    t: usize,
    n_heads: usize,
    d_head: usize,
) -> (Vec<R>, Vec<R>, Vec<R>) {
    let d = n_heads * d_head;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut dq = vec![0.0f64; t * d];
    let mut dk = vec![0.0f64; t * d];
    let mut dv = vec![0.0f64; t * d];
    let mut da = vec![0.0f64; t];
    for h in 0..n_heads {
        let off = h * d_head;
        for i in 0..t {
            let a = &att[(h * t + i) * t..(h * t + i) * t + i + 1];
            let dzi = &dz[i * d + off..i * d + off + d_head];
            let mut weighted = 0.0f64;
            for j in 0..=i {
                let vj = &v[j * d + off..j * d + off + d_head];
                da[j] = dzi.iter().zip(vj).map(|(&x, &y)| x.to_f64() * y.to_f64()).sum();
                weighted += a[j].to_f64() * da[j];
                for c in 0..d_head {
                    dv[j * d + off + c] += a[j].to_f64() * dzi[c].to_f64();
                }
            }
            for j in 0..=i {
                let ds = a[j].to_f64() * (da[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..d_head {
                    dq[i * d + off + c] += ds * k[j * d + off + c].to_f64();
                    dk[j * d + off + c] += ds * q[i * d + off + c].to_f64();
                }
            }
        }
    }
    let narrow = |x: Vec<f64>| x.into_iter().map(R::from_f64).collect::<Vec<R>>();
    (narrow(dq), narrow(dk), narrow(dv))
}

fn batch_backward<R: Real>(params: &Params<'_, R>, batch: &[TokenSequence], parallel: bool) -> Result<(GradBufs<R>, f64)> {
    let total: usize = batch.iter().map(|w| w.len().saturating_sub(1)).sum();
    if batch.iter().any(|w| w.len() < 2) || total == 0 {
        return Err(Error::Config("every training window needs at least 2 tokens".into()));
    }
    let scale = 1.0 / total as f64;
    let per_seq: Vec<Result<(GradBufs<R>, f64)>> = if parallel {
        batch
            .par_iter()
            .map(|w| sequence_backward(params, w.ids(), scale))
            .collect()
    } else {
        batch
            .iter()
            .map(|w| sequence_backward(params, w.ids(), scale))
            .collect()
    };
    let mut grads: Option<GradBufs<R>> = None;
    let mut nll = 0.0f64;
    for r in per_seq {
        let (g, s) = r?;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    for (x, &y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
            }
        }
        nll += s;
    }
    let loss = nll / total as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((grads.expect("batch is non-empty"), loss))
}

/// Gradients of the mean next-token cross-entropy over all predicted
/// positions of `batch`, plus that loss. Each window of length `n`
/// contributes `n - 1` predictions.
pub fn backward(weights: &ModelWeights, batch: &[TokenSequence], parallel: bool) -> Result<(Gradients, f64)> {
    let (bufs, loss) = batch_backward(&weights.params(), batch, parallel)?;
    let tensors = tensor_layout(weights.config())
        .into_iter()
        .zip(bufs)
        .map(|((_, shape), data)| Tensor::from_raw(shape, data))
        .collect();
    Ok((ModelWeights::from_tensors(*weights.config(), tensors)?, loss))
}

/// [`backward`] evaluated entirely in f64 at the given parameters, which
/// are listed in [`tensor_layout`] order. Used to verify the analytic
/// gradients without f32 rounding noise.
pub fn backward_f64(config: &ModelConfig, params: &[Vec<f64>], batch: &[TokenSequence]) -> Result<(Vec<Vec<f64>>, f64)> {
    config.validate()?;
    let layout = tensor_layout(config);
    if layout.len() != params.len()
        || layout
            .iter()
            .zip(params)
            .any(|((_, s), p)| s.iter().product::<usize>() != p.len())
    {
        return Err(Error::Shape("parameter list does not match the model layout".into()));
    }
    let slices: Vec<&[f64]> = params.iter().map(Vec::as_slice).collect();
    batch_backward(&Params::from_slices(*config, &slices), batch, false)
}

struct AdamW {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    decay: Vec<bool>,
    step: i32,
}

impl AdamW {
    fn new(weights: &ModelWeights) -> Self {
        let tensors = weights.tensors();
        AdamW {
            m: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            decay: tensor_layout(weights.config())
                .iter()
                .map(|(name, _)| ModelWeights::decays(name))
                .collect(),
            step: 0,
        }
    }

    fn update(&mut self, weights: &mut ModelWeights, grads: &Gradients, cfg: &TrainConfig, clip: f32) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let lr = cfg.learning_rate;
        for (i, (w, g)) in weights.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            let wd = if self.decay[i] { cfg.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (p, &gr)) in w.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gr = gr * clip;
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gr;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gr * gr;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *p -= lr * (mhat / (vhat.sqrt() + cfg.eps) + wd * *p);
            }
        }
    }
}

fn grad_norm(grads: &Gradients) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.data())
        .map(|&g| g as f64 * g as f64)
        .sum::<f64>()
        .sqrt()
}

/// Trains a freshly initialized model on random windows of `corpus`.
pub fn train(corpus: &[u8], model: ModelConfig, cfg: &TrainConfig) -> Result<(ModelWeights, LossCurve)> {
    cfg.validate(&model)?;
    let need = cfg.seq_len + 1;
    if corpus.len() < need {
        return Err(Error::CorpusTooSmall {
            len: corpus.len(),
            need,
        });
    }
    let mut weights = ModelWeights::init(model, cfg.init_scale, cfg.seed)?;
    let mut opt = AdamW::new(&weights);
    // window sampling stream is separate from the init stream
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed ^ 0x5eed_0f_da7a);
    let mut curve = LossCurve::default();
    let max_start = corpus.len() - need;
    for step in 0..cfg.steps {
        let batch: Vec<TokenSequence> = (0..cfg.batch_size)
            .map(|_| {
                let s = rng.random_range(0..=max_start);
                crate::model::tokenize(&corpus[s..s + need])
            })
            .collect();
        let (grads, loss) = match backward(&weights, &batch, cfg.parallel) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { step, loss: f32::NAN }),
            Err(e) => return Err(e),
        };
        let norm = grad_norm(&grads);
        if !norm.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: loss as f32,
            });
        }
        let clip = match cfg.grad_clip {
            Some(c) if norm > c as f64 => (c as f64 / norm) as f32,
            _ => 1.0,
        };
        opt.update(&mut weights, &grads, cfg, clip);
        curve.points.push((step, loss as f32));
    }
    Ok((weights, curve))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corpus_hash: String,
    pub weights_hash: String,
    pub final_loss: Option<f32>,
    pub curve: LossCurve,
}
