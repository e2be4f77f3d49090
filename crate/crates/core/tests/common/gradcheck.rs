use ablab::model::{tensor_layout, ModelConfig, ModelWeights, TokenSequence};
use ablab::trainer::{backward, backward_f64};

use super::reference::reference_loss;

pub const STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
pub const MIN_MAGNITUDE: f64 = 1e-8;
pub const TOY_INIT_SCALE: f32 = 0.3;
pub const TOY_SEED: u64 = 1;

#[derive(Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

/// 1 layer, d_model 8: the configuration the gradient check runs on.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        max_seq: 8,
        ..Default::default()
    }
}

pub fn toy_batch() -> Vec<TokenSequence> {
    vec![
        TokenSequence(vec![104, 101, 108, 108, 111, 33]),
        TokenSequence(vec![7, 200, 7, 13]),
    ]
}

/// Which precision the analytic gradients are computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    F32,
    F64,
}

pub fn params_f64(weights: &ModelWeights) -> Vec<Vec<f64>> {
    weights
        .tensors()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect()
}

pub fn analytic(weights: &ModelWeights, batch: &[TokenSequence], route: Route) -> Vec<Vec<f64>> {
    match route {
        Route::F64 => backward_f64(weights.config(), &params_f64(weights), batch).expect("backward").0,
        Route::F32 => params_f64(&backward(weights, batch, false).expect("backward").0),
    }
}

/// Compares analytic gradients with central differences of the f64
/// reference loss, component by component.
pub fn check(weights: &ModelWeights, batch: &[TokenSequence], route: Route) -> GradCheckReport {
    check_with_step(weights, batch, route, STEP)
}

pub fn check_with_step(weights: &ModelWeights, batch: &[TokenSequence], route: Route, step: f64) -> GradCheckReport {
    let cfg = *weights.config();
    let grads = analytic(weights, batch, route);
    let mut params = params_f64(weights);
    let names = tensor_layout(&cfg);
    let mut report = GradCheckReport::default();
    for (ti, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = params[ti][j];
            params[ti][j] = orig + step;
            let up = reference_loss(&cfg, &params, batch);
            params[ti][j] = orig - step;
            let down = reference_loss(&cfg, &params, batch);
            params[ti][j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = g[j];
            let mag = analytic.abs().max(numeric.abs());
            if mag < MIN_MAGNITUDE {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let rel = (analytic - numeric).abs() / mag;
            report.worst_rel = report.worst_rel.max(rel);
            if rel > REL_TOL {
                report.failures.push(format!(
                    "{}[{j}]: analytic {analytic:e} numeric {numeric:e} rel {rel:e}",
                    names[ti].0
                ));
            }
        }
    }
    report
}
