//! Straightforward f64 re-implementation of the model's loss, used as an
//! oracle. Parameters are plain vectors in `tensor_layout` order.

use ablab::model::{ModelConfig, TokenSequence};

type Mat = Vec<Vec<f64>>;

fn matmul(x: &Mat, w: &[f64], cols: usize) -> Mat {
    let rows = w.len() / cols;
    x.iter()
        .map(|r| {
            (0..cols)
                .map(|j| (0..rows).map(|i| r[i] * w[i * cols + j]).sum())
                .collect()
        })
        .collect()
}

fn layernorm(x: &Mat, g: &[f64], b: &[f64]) -> Mat {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(i, v)| (v - mu) / (var + 1e-5).sqrt() * g[i] + b[i])
                .collect()
        })
        .collect()
}

fn gelu(a: f64) -> f64 {
    0.5 * a * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (a + 0.044715 * a.powi(3))).tanh())
}

/// Mean next-token NLL over every predicted position of `batch`.
pub fn reference_loss(cfg: &ModelConfig, p: &[Vec<f64>], batch: &[TokenSequence]) -> f64 {
    let (d, v, f, hn) = (cfg.d_model, cfg.vocab_size, cfg.d_mlp(), cfg.n_heads);
    let dh = d / hn;
    let mut total = 0.0;
    let mut count = 0usize;
    for window in batch {
        let ids = &window.0[..window.len() - 1];
        let targets = &window.0[1..];
        let t = ids.len();
        let mut x: Mat = ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| (0..d).map(|c| p[0][id as usize * d + c] + p[1][pos * d + c]).collect())
            .collect();
        for l in 0..cfg.n_layers {
            let w = &p[2 + 12 * l..2 + 12 * (l + 1)];
            let h = layernorm(&x, &w[0], &w[1]);
            let (q, k, vv) = (matmul(&h, &w[2], d), matmul(&h, &w[3], d), matmul(&h, &w[4], d));
            let mut z = vec![vec![0.0; d]; t];
            for head in 0..hn {
                for i in 0..t {
                    let s: Vec<f64> = (0..=i)
                        .map(|j| {
                            (0..dh).map(|c| q[i][head * dh + c] * k[j][head * dh + c]).sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    let m = s.iter().cloned().fold(f64::MIN, f64::max);
                    let den: f64 = s.iter().map(|x| (x - m).exp()).sum();
                    for j in 0..=i {
                        let a = (s[j] - m).exp() / den;
                        for c in 0..dh {
                            z[i][head * dh + c] += a * vv[j][head * dh + c];
                        }
                    }
                }
            }
            let o = matmul(&z, &w[5], d);
            for i in 0..t {
                for c in 0..d {
                    x[i][c] += o[i][c];
                }
            }
            let h2 = layernorm(&x, &w[6], &w[7]);
            let mut u = matmul(&h2, &w[8], f);
            for r in &mut u {
                for (j, a) in r.iter_mut().enumerate() {
                    *a = gelu(*a + w[9][j]);
                }
            }
            let m = matmul(&u, &w[10], d);
            for i in 0..t {
                for c in 0..d {
                    x[i][c] += m[i][c] + w[11][c];
                }
            }
        }
        let n = p.len();
        let xf = layernorm(&x, &p[n - 3], &p[n - 2]);
        let logits = matmul(&xf, &p[n - 1], v);
        for (row, &target) in logits.iter().zip(targets) {
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[target as usize];
            count += 1;
        }
    }
    total / count as f64
}
