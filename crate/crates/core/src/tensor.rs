//! Dense row-major `f32` tensors and the handful of kernels the model needs.
//!
//! Reductions (matmul inner products, softmax denominators, layer-norm
//! moments) accumulate in `f64` and use a fixed loop order, so every kernel
//! is bit-reproducible for identical input. The `pub(crate)` slice kernels
//! are what the model and trainer run on; the [`Tensor`] methods wrap them
//! with shape and finiteness checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, rejecting zero-sized dimensions, length mismatches
    /// and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!("invalid shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        check_finite(&data, "tensor data")?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        assert!(!shape.is_empty() && !shape.contains(&0), "invalid shape {shape:?}");
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_rows(rows: &[&[f32]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] => Ok((m, n)),
            s => Err(Error::Shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let n = *self.shape.last().unwrap();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions {m}x{k} * {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, m, k, n, &mut out);
        check_finite(&out, "matmul output")?;
        Ok(Tensor::from_raw(vec![m, n], out))
    }

    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (_, n) = self.dims2()?;
        let mut out = self.data.clone();
        for row in out.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
        check_finite(&out, "softmax output")?;
        Ok(Tensor::from_raw(self.shape.clone(), out))
    }

    /// Per-row argmax; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        let (_, n) = self.dims2()?;
        Ok(self.data.chunks_exact(n).map(argmax).collect())
    }

    /// Mean next-token negative log-likelihood in nats.
    pub fn cross_entropy(&self, targets: &[u32]) -> Result<f64> {
        let (t, v) = self.dims2()?;
        if targets.len() != t {
            return Err(Error::Shape(format!(
                "{t} logit rows but {} targets",
                targets.len()
            )));
        }
        let mut total = 0.0f64;
        for (row, &target) in self.data.chunks_exact(v).zip(targets) {
            if target as usize >= v {
                return Err(Error::TokenOutOfRange {
                    id: target,
                    vocab: v,
                });
            }
            total += nll(row, target as usize);
        }
        let loss = total / t as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("cross-entropy".into()));
        }
        Ok(loss)
    }

    /// Row-wise layer norm over the last axis.
    pub fn layernorm(&self, gain: &[f32], bias: &[f32]) -> Result<Tensor> {
        let (_, n) = self.dims2()?;
        if gain.len() != n || bias.len() != n {
            return Err(Error::Shape(format!(
                "layernorm width {n} with gain {} and bias {}",
                gain.len(),
                bias.len()
            )));
        }
        let mut out = vec![0.0; self.data.len()];
        for (x, y) in self.data.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            layernorm_row(x, gain, bias, y);
        }
        check_finite(&out, "layernorm output")?;
        Ok(Tensor::from_raw(self.shape.clone(), out))
    }

    pub fn gelu(&self) -> Result<Tensor> {
        let out: Vec<f32> = self.data.iter().map(|&x| gelu(x)).collect();
        check_finite(&out, "gelu output")?;
        Ok(Tensor::from_raw(self.shape.clone(), out))
    }
}

pub(crate) fn check_finite<R: Real>(data: &[R], what: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Scalar type the model kernels run on: `f32` in production, `f64` when
/// gradients are verified against finite differences.
pub trait Real:
    num_traits::Float + std::ops::AddAssign + Default + Send + Sync + std::fmt::Debug + 'static
{
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Real for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`, loop order i-k-j with an `f64` row accumulator.
pub(crate) fn matmul_into<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize, out: &mut [R]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let av = av.to_f64();
            let b_row = &b[p * n..(p + 1) * n];
            for (s, &bv) in acc.iter_mut().zip(b_row) {
                *s += av * bv.to_f64();
            }
        }
        for (o, &s) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = R::from_f64(s);
        }
    }
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`. Used for weight gradients.
pub(crate) fn matmul_tn_acc<R: Real>(a: &[R], b: &[R], k: usize, m: usize, n: usize, out: &mut [R]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut acc = vec![0.0f64; m * n];
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i].to_f64();
            if av == 0.0 {
                continue;
            }
            for (s, &bv) in acc[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                *s += av * bv.to_f64();
            }
        }
    }
    for (o, s) in out.iter_mut().zip(acc) {
        *o += R::from_f64(s);
    }
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`.
pub(crate) fn matmul_nt<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize, out: &mut [R]) {
    let bt = transpose(b, n, k);
    matmul_into(a, &bt, m, k, n, out);
}

pub(crate) fn transpose<R: Real>(a: &[R], rows: usize, cols: usize) -> Vec<R> {
    let mut t = vec![R::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Stable softmax with max subtraction and an `f64` denominator.
pub(crate) fn softmax_in_place<R: Real>(row: &mut [R]) {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max).to_f64();
    let mut sum = 0.0f64;
    for v in row.iter_mut() {
        let e = (v.to_f64() - max).exp();
        *v = R::from_f64(e);
        sum += e;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v = R::from_f64(v.to_f64() * inv);
    }
}

pub(crate) fn argmax<R: Real>(row: &[R]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `logsumexp(row) - row[target]`, in `f64`.
pub(crate) fn nll<R: Real>(row: &[R], target: usize) -> f64 {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max).to_f64();
    let sum: f64 = row.iter().map(|&v| (v.to_f64() - max).exp()).sum();
    max + sum.ln() - row[target].to_f64()
}

/// Normalizes one row. Returns `(mean, inverse std)` for the backward pass.
pub(crate) fn layernorm_row<R: Real>(x: &[R], gain: &[R], bias: &[R], out: &mut [R]) -> (R, R) {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v.to_f64()).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v.to_f64() - mean).powi(2)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for i in 0..x.len() {
        let xhat = (x[i].to_f64() - mean) * rstd;
        out[i] = R::from_f64(xhat * gain[i].to_f64() + bias[i].to_f64());
    }
    (R::from_f64(mean), R::from_f64(rstd))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Tanh-approximated GELU.
pub(crate) fn gelu<R: Real>(x: R) -> R {
    let (half, c, a) = (R::from_f64(0.5), R::from_f64(GELU_C), R::from_f64(GELU_A));
    half * x * (R::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<R: Real>(x: R) -> R {
    let (half, c, a) = (R::from_f64(0.5), R::from_f64(GELU_C), R::from_f64(GELU_A));
    let th = (c * (x + a * x * x * x)).tanh();
    let du = c * (R::one() + R::from_f64(3.0) * a * x * x);
    half * (R::one() + th) + half * x * (R::one() - th * th) * du
}
