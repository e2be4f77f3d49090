//! Neuron selection schedules, next-token metrics, the pruning-fraction
//! sweep and the constant sweep.
//!
//! Selection is cumulative: for a given seed the universe of pre-out neurons
//! is shuffled once and every fraction takes a prefix of that order, so
//! raising the fraction only ever adds neurons.

use std::collections::{BTreeMap, HashSet};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::{AblationPlan, NeuronId, PlanMetadata, ReplacementSpec};
use crate::model::{forward, ModelConfig, ModelWeights, PAD};
use crate::stats::HistogramSpec;
use crate::strategies::{collect_stats, plan_from_stats, plan_resample, plan_zero, DatasetRef, Method};
use crate::tensor::{argmax, nll};
use crate::workers::map_ordered;

pub const RNG_ALGORITHM: &str = "xoshiro256++ seeded via splitmix64 (rand_xoshiro seed_from_u64)";
pub const SHUFFLE_ALGORITHM: &str = "Fisher-Yates from the last index, j uniform in 0..=i";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds away float drift from grid arithmetic (0.1 * 3 → 0.3).
fn tidy(x: f64) -> f64 {
    let r = (x * 1e10).round() / 1e10;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// `start, start + step, …` up to and including `end`. `start == end`
/// yields a single point regardless of `step`.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && end.is_finite() && step.is_finite()) || end < start {
        return Err(Error::Config(format!("bad grid {start}:{end}:{step}")));
    }
    if start == end {
        return Ok(vec![tidy(start)]);
    }
    if step <= 0.0 {
        return Err(Error::Config(format!("grid step {step} must be positive")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| tidy(start + i as f64 * step)).collect())
}

/// Parses `"start:end:step"`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(Error::Config(format!("grid {text:?} is not start:end:step")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("grid {text:?}: {s:?} is not a number")))
    };
    linear_grid(num(a)?, num(b)?, num(c)?)
}

/// `⌈fraction · N⌉`, tolerant of grid rounding just above an integer.
pub fn ablated_count(fraction: f64, universe: usize) -> usize {
    ((fraction * universe as f64 - 1e-9).ceil().max(0.0) as usize).min(universe)
}

/// The full universe of pre-out neurons in seeded shuffled order.
pub fn shuffled_universe(seed: u64, config: &ModelConfig) -> Vec<NeuronId> {
    let mut ids = NeuronId::universe(config);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    ids
}

/// The first `⌈fraction · N⌉` neurons of the seeded shuffle.
pub fn select_neurons(seed: u64, fraction: f64, config: &ModelConfig) -> Result<Vec<NeuronId>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let mut ids = shuffled_universe(seed, config);
    ids.truncate(ablated_count(fraction, ids.len()));
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percent of positions whose top logit is the true next token.
    pub top1: f64,
    /// Mean negative log-likelihood in nats.
    pub ce_loss: f64,
    pub tokens: usize,
}

/// Next-token metrics over every prediction position of `eval`
/// (positions whose target is PAD are skipped). Per-sequence sums are
/// reduced in dataset order, so `workers` never changes the result.
pub fn evaluate(
    weights: &ModelWeights,
    plan: Option<&AblationPlan>,
    eval: &DatasetRef,
    workers: usize,
) -> Result<Metrics> {
    let v = weights.config().vocab_size;
    let per_seq = map_ordered(workers, eval.sequences(), |seq| -> Result<(u64, f64, usize)> {
        let logits = forward(weights, seq, plan, None)?.logits;
        let mut correct = 0u64;
        let mut nll_sum = 0.0f64;
        let mut n = 0usize;
        for (row, &target) in logits.data().chunks_exact(v).zip(&seq.ids()[1..]) {
            if target == PAD {
                continue;
            }
            correct += (argmax(row) == target as usize) as u64;
            nll_sum += nll(row, target as usize);
            n += 1;
        }
        Ok((correct, nll_sum, n))
    });
    let (mut correct, mut total_nll, mut tokens) = (0u64, 0.0f64, 0usize);
    for r in per_seq {
        let (c, s, n) = r?;
        correct += c;
        total_nll += s;
        tokens += n;
    }
    if tokens == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(Metrics {
        top1: 100.0 * correct as f64 / tokens as f64,
        ce_loss: total_nll / tokens as f64,
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Evaluation budget in tokens.
    pub eval_tokens: usize,
    /// Length of each evaluation / statistics sequence; model `max_seq` if unset.
    pub seq_len: Option<usize>,
    pub histogram: HistogramSpec,
    /// Resample input length; model `max_seq` if unset.
    pub bank_length: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fractions: linear_grid(0.0, 1.0, 0.1).expect("static grid"),
            seeds: vec![1, 2, 3],
            methods: Method::ALL.to_vec(),
            eval_tokens: 10_000,
            seq_len: None,
            histogram: HistogramSpec::default(),
            bank_length: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.fractions.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return fail("sweep needs at least one fraction, seed and method".into());
        }
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return fail(format!("fractions {:?} must lie in [0, 1]", self.fractions));
        }
        if self.fractions.windows(2).any(|w| w[1] <= w[0]) {
            return fail(format!("fractions {:?} must be strictly increasing", self.fractions));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return fail(format!("seeds {:?} must be distinct", self.seeds));
        }
        if self.methods.iter().collect::<HashSet<_>>().len() != self.methods.len() {
            return fail(format!("methods {:?} listed twice", self.methods));
        }
        if self.eval_tokens == 0 {
            return fail("eval token budget must be >= 1".into());
        }
        if self.seq_len == Some(0) || self.bank_length == Some(0) {
            return fail("sequence and bank lengths must be >= 1".into());
        }
        self.histogram.validate()
    }

    pub fn seq_len_for(&self, config: &ModelConfig) -> usize {
        self.seq_len.unwrap_or(config.max_seq)
    }

    pub fn bank_length_for(&self, config: &ModelConfig) -> usize {
        self.bank_length.unwrap_or(config.max_seq)
    }

    /// The evaluation slice: the first `eval_tokens` bytes of `bytes`.
    pub fn eval_set(&self, bytes: &[u8], config: &ModelConfig) -> Result<DatasetRef> {
        DatasetRef::from_bytes(bytes, self.seq_len_for(config), self.eval_tokens, config)
    }

    /// The statistics dataset: all of `bytes`, chunked like the eval slice.
    pub fn stats_set(&self, bytes: &[u8], config: &ModelConfig) -> Result<DatasetRef> {
        DatasetRef::from_bytes(bytes, self.seq_len_for(config), usize::MAX, config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub seed: u64,
    pub fraction: f64,
    pub n_ablated: usize,
    pub top1: f64,
    pub ce_loss: f64,
}

/// Mean ± sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub fraction: f64,
    pub top1_mean: f64,
    pub top1_sd: f64,
    pub ce_mean: f64,
    pub ce_sd: f64,
}

/// Mean and sample (n − 1) standard deviation; sd is 0 for fewer than two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(rows: &[SweepRow], methods: &[Method], fractions: &[f64]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &method in methods {
        for &fraction in fractions {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.method == method && r.fraction == fraction)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let (top1_mean, top1_sd) = mean_sd(&cell.iter().map(|r| r.top1).collect::<Vec<_>>());
            let (ce_mean, ce_sd) = mean_sd(&cell.iter().map(|r| r.ce_loss).collect::<Vec<_>>());
            out.push(AggregateRow {
                method,
                fraction,
                top1_mean,
                top1_sd,
                ce_mean,
                ce_sd,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub rng: String,
    pub shuffle: String,
    pub sweep: SweepConfig,
    pub model: ModelConfig,
    pub weights_hash: String,
    pub eval_hash: String,
    pub eval_tokens_used: usize,
    pub stats_hash: Option<String>,
    /// Sequences shared between the statistics dataset and the eval slice.
    pub stats_eval_shared_sequences: Option<usize>,
    pub aggregation: String,
    pub baseline: Metrics,
    /// Wall-clock seconds since the Unix epoch. The only field that varies
    /// between otherwise identical runs.
    pub timestamp_unix_nondeterministic: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub aggregate: Vec<AggregateRow>,
    pub manifest: RunManifest,
}

/// Plans covering the whole neuron universe, cut down per cell.
struct PlanCache {
    zero: AblationPlan,
    by_method: BTreeMap<Method, AblationPlan>,
    by_resample: BTreeMap<(Method, u64), AblationPlan>,
}

impl PlanCache {
    fn plan_for(&self, method: Method, seed: u64, neurons: &[NeuronId]) -> AblationPlan {
        let full = match method {
            Method::Zero => &self.zero,
            Method::Mean | Method::Peak => &self.by_method[&method],
            Method::Resample(_) => &self.by_resample[&(method, seed)],
        };
        full.subset(neurons)
    }
}

/// Runs every (method, seed, fraction) cell.
///
/// Mean/peak statistics are collected once over the whole universe from
/// `stats`; resample banks are built once per (method, seed). Cells with
/// no ablated neuron reuse the baseline metrics, which an empty plan
/// reproduces bit for bit.
pub fn run_sweep(
    weights: &ModelWeights,
    sweep: &SweepConfig,
    eval: &DatasetRef,
    stats: Option<&DatasetRef>,
    workers: usize,
) -> Result<SweepOutput> {
    sweep.validate()?;
    let cfg = *weights.config();
    let universe = NeuronId::universe(&cfg);
    let baseline = evaluate(weights, None, eval, workers)?;

    let mut by_method = BTreeMap::new();
    let stat_methods: Vec<Method> = sweep.methods.iter().copied().filter(|m| m.needs_dataset()).collect();
    if !stat_methods.is_empty() {
        let data = stats.ok_or_else(|| Error::Config("mean/peak ablation needs a statistics dataset".into()))?;
        let acc = collect_stats(weights, data, &universe, sweep.histogram, workers)?;
        for m in stat_methods {
            by_method.insert(m, plan_from_stats(&cfg, &acc, m, data.hash())?);
        }
    }
    let mut by_resample = BTreeMap::new();
    for &m in &sweep.methods {
        if let Method::Resample(kind) = m {
            for &seed in &sweep.seeds {
                let plan = plan_resample(weights, kind, &universe, sweep.bank_length_for(&cfg), seed)?;
                by_resample.insert((m, seed), plan);
            }
        }
    }
    let cache = PlanCache {
        zero: plan_zero(&cfg, &universe)?,
        by_method,
        by_resample,
    };

    let orders: BTreeMap<u64, Vec<NeuronId>> = sweep
        .seeds
        .iter()
        .map(|&s| (s, shuffled_universe(s, &cfg)))
        .collect();
    let cells: Vec<(Method, u64, f64)> = sweep
        .methods
        .iter()
        .flat_map(|&m| {
            sweep
                .seeds
                .iter()
                .flat_map(move |&s| sweep.fractions.iter().map(move |&f| (m, s, f)))
        })
        .collect();
    let results = map_ordered(workers, &cells, |&(method, seed, fraction)| -> Result<SweepRow> {
        let n = ablated_count(fraction, universe.len());
        let metrics = if n == 0 {
            baseline
        } else {
            let plan = cache.plan_for(method, seed, &orders[&seed][..n]);
            evaluate(weights, Some(&plan), eval, 1)?
        };
        Ok(SweepRow {
            method,
            seed,
            fraction,
            n_ablated: n,
            top1: metrics.top1,
            ce_loss: metrics.ce_loss,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&rows, &sweep.methods, &sweep.fractions);

    let shared = stats.map(|d| {
        let eval_set: HashSet<_> = eval.sequences().iter().collect();
        d.sequences().iter().filter(|s| eval_set.contains(s)).count()
    });
    let manifest = RunManifest {
        tool: "ablab".into(),
        tool_version: TOOL_VERSION.into(),
        rng: RNG_ALGORITHM.into(),
        shuffle: SHUFFLE_ALGORITHM.into(),
        sweep: sweep.clone(),
        model: cfg,
        weights_hash: weights.content_hash(),
        eval_hash: eval.hash().into(),
        eval_tokens_used: baseline.tokens,
        stats_hash: stats.map(|d| d.hash().to_string()),
        stats_eval_shared_sequences: shared,
        aggregation: "mean and sample (n-1) standard deviation across seeds".into(),
        baseline,
        timestamp_unix_nondeterministic: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    Ok(SweepOutput {
        rows,
        aggregate,
        manifest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPoint {
    pub constant: f32,
    pub ce_loss: f64,
    pub top1: f64,
}

/// Metrics with every neuron in `neurons` pinned to each constant in turn.
pub fn constant_sweep(
    weights: &ModelWeights,
    neurons: &[NeuronId],
    constants: &[f32],
    eval: &DatasetRef,
    workers: usize,
) -> Result<Vec<ConstantPoint>> {
    if constants.is_empty() {
        return Err(Error::Config("constant sweep needs at least one constant".into()));
    }
    let cfg = weights.config();
    let plans = constants
        .iter()
        .map(|&c| {
            let meta = PlanMetadata {
                method: "constant".into(),
                ..Default::default()
            };
            AblationPlan::new(cfg, neurons.iter().map(|&n| (n, ReplacementSpec::Constant(c))), meta)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = map_ordered(workers, &plans, |plan| evaluate(weights, Some(plan), eval, 1));
    constants
        .iter()
        .zip(results)
        .map(|(&constant, m)| {
            let m = m?;
            Ok(ConstantPoint {
                constant,
                ce_loss: m.ce_loss,
                top1: m.top1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TokenSequence;
    use crate::strategies::ResampleKind;

    fn toy() -> ModelWeights {
        let cfg = ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            max_seq: 16,
            ..Default::default()
        };
        ModelWeights::init(cfg, 0.3, 33).unwrap()
    }

    const TEXT: &[u8] = b"a small corpus of words, with commas. and some more words to read.";

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:0:0.1").unwrap(), vec![0.0]);
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_grid("-1:1:0.5").unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:x:0.1").is_err());
    }

    #[test]
    fn ablated_counts() {
        assert_eq!(ablated_count(0.0, 128), 0);
        assert_eq!(ablated_count(0.1, 128), 13);
        assert_eq!(ablated_count(0.5, 128), 64);
        assert_eq!(ablated_count(1.0, 128), 128);
        // 0.3 · 10 is 3.0000000000000004 in floating point
        assert_eq!(ablated_count(0.1 * 3.0, 10), 3);
    }

    #[test]
    fn selection_properties() {
        let cfg = *toy().config();
        assert!(select_neurons(7, 0.0, &cfg).unwrap().is_empty());
        let all = select_neurons(7, 1.0, &cfg).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, NeuronId::universe(&cfg));
        let a = select_neurons(7, 0.1, &cfg).unwrap();
        let b = select_neurons(7, 0.2, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 4);
        assert_eq!(&b[..a.len()], a.as_slice());
        assert_ne!(all, select_neurons(8, 1.0, &cfg).unwrap());
        assert!(select_neurons(7, 1.5, &cfg).is_err());
    }

    /// Explicit per-position softmax, independent of the evaluator.
    fn oracle_metrics(w: &ModelWeights, eval: &DatasetRef) -> (f64, f64) {
        let (mut correct, mut nll_sum, mut n) = (0usize, 0.0f64, 0usize);
        for seq in eval.sequences() {
            let l = crate::model::logits(w, seq).unwrap();
            for (t, &target) in seq.ids()[1..].iter().enumerate() {
                let row: Vec<f64> = l.row(t).iter().map(|&x| x as f64).collect();
                let m = row.iter().cloned().fold(f64::MIN, f64::max);
                let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                nll_sum += lse - row[target as usize];
                let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
                correct += (best == target as usize) as usize;
                n += 1;
            }
        }
        (100.0 * correct as f64 / n as f64, nll_sum / n as f64)
    }

    #[test]
    fn evaluate_matches_oracle_and_ignores_workers() {
        let w = toy();
        let eval = DatasetRef::from_bytes(TEXT, 16, 1000, w.config()).unwrap();
        let m = evaluate(&w, None, &eval, 1).unwrap();
        let (top1, ce) = oracle_metrics(&w, &eval);
        assert!((m.top1 - top1).abs() < 1e-9);
        assert!((m.ce_loss - ce).abs() < 1e-6);
        assert_eq!(m.tokens, TEXT.len() - eval.sequences().len());
        assert_eq!(m, evaluate(&w, None, &eval, 4).unwrap());
        let empty = AblationPlan::empty(w.config());
        assert_eq!(m, evaluate(&w, Some(&empty), &eval, 2).unwrap());
    }

    #[test]
    fn evaluate_skips_pad_targets_and_empty_sets() {
        let w = toy();
        let eval = DatasetRef::new(vec![TokenSequence(vec![1, 2, PAD, 3])], w.config()).unwrap();
        assert_eq!(evaluate(&w, None, &eval, 1).unwrap().tokens, 2);
        let single = DatasetRef::new(vec![TokenSequence(vec![1])], w.config()).unwrap();
        assert!(matches!(evaluate(&w, None, &single, 1), Err(Error::EmptyDataset)));
    }

    #[test]
    fn mean_sd_convention() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((sd - 1.0).abs() < 1e-12);
    }

    fn small_sweep() -> SweepConfig {
        SweepConfig {
            fractions: vec![0.0, 0.5, 1.0],
            seeds: vec![1, 2],
            bank_length: Some(8),
            ..Default::default()
        }
    }

    #[test]
    fn sweep_shape_and_baseline() {
        let w = toy();
        let sweep = small_sweep();
        let eval = sweep.eval_set(TEXT, w.config()).unwrap();
        let stats = sweep.stats_set(b"different text for statistics only", w.config()).unwrap();
        let out = run_sweep(&w, &sweep, &eval, Some(&stats), 1).unwrap();
        assert_eq!(out.rows.len(), 6 * 2 * 3);
        assert_eq!(out.aggregate.len(), 6 * 3);
        let base = evaluate(&w, None, &eval, 1).unwrap();
        for r in out.rows.iter().filter(|r| r.fraction == 0.0) {
            assert_eq!((r.top1, r.ce_loss, r.n_ablated), (base.top1, base.ce_loss, 0));
        }
        for r in &out.rows {
            assert!((0.0..=100.0).contains(&r.top1) && r.ce_loss >= 0.0);
            assert_eq!(r.n_ablated, ablated_count(r.fraction, 16));
        }
        assert_eq!(out.manifest.stats_eval_shared_sequences, Some(0));
        assert_eq!(out.manifest.baseline, base);

        // cells agree with building and evaluating the plan directly
        let row = out
            .rows
            .iter()
            .find(|r| r.method == Method::Resample(ResampleKind::Rs1) && r.seed == 2 && r.fraction == 0.5)
            .unwrap();
        let ids = select_neurons(2, 0.5, w.config()).unwrap();
        let plan = plan_resample(&w, ResampleKind::Rs1, &ids, 8, 2).unwrap();
        let m = evaluate(&w, Some(&plan), &eval, 1).unwrap();
        assert_eq!((row.top1, row.ce_loss), (m.top1, m.ce_loss));
        let row = out
            .rows
            .iter()
            .find(|r| r.method == Method::Peak && r.seed == 1 && r.fraction == 1.0)
            .unwrap();
        let plan = crate::strategies::plan_peak(&w, &stats, &NeuronId::universe(w.config()), sweep.histogram, 1).unwrap();
        let m = evaluate(&w, Some(&plan), &eval, 1).unwrap();
        assert_eq!((row.top1, row.ce_loss), (m.top1, m.ce_loss));
    }

    #[test]
    fn sweep_is_deterministic_across_workers() {
        let w = toy();
        let sweep = small_sweep();
        let eval = sweep.eval_set(TEXT, w.config()).unwrap();
        let a = run_sweep(&w, &sweep, &eval, Some(&eval), 1).unwrap();
        let b = run_sweep(&w, &sweep, &eval, Some(&eval), 3).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.aggregate, b.aggregate);
        assert!(a.manifest.stats_eval_shared_sequences.unwrap() > 0);
    }

    #[test]
    fn sweep_config_validation() {
        let w = toy();
        let eval = SweepConfig::default().eval_set(TEXT, w.config()).unwrap();
        let bad = [
            SweepConfig { fractions: vec![0.5, 0.2], ..small_sweep() },
            SweepConfig { seeds: vec![1, 1], ..small_sweep() },
            SweepConfig { eval_tokens: 0, ..small_sweep() },
            SweepConfig { fractions: vec![1.2], ..small_sweep() },
        ];
        for s in bad {
            assert!(matches!(run_sweep(&w, &s, &eval, None, 1), Err(Error::Config(_))));
        }
        // mean needs statistics
        assert!(run_sweep(&w, &small_sweep(), &eval, None, 1).is_err());
        let zero_only = SweepConfig { methods: vec![Method::Zero], ..small_sweep() };
        assert!(run_sweep(&w, &zero_only, &eval, None, 1).is_ok());
    }

    #[test]
    fn constant_sweep_properties() {
        let w = toy();
        let eval = DatasetRef::from_bytes(TEXT, 16, 1000, w.config()).unwrap();
        let ids = select_neurons(1, 0.5, w.config()).unwrap();
        assert!(constant_sweep(&w, &ids, &[], &eval, 1).is_err());
        let one = constant_sweep(&w, &ids, &[0.25], &eval, 1).unwrap();
        let plan = AblationPlan::new(
            w.config(),
            ids.iter().map(|&n| (n, ReplacementSpec::Constant(0.25))),
            Default::default(),
        )
        .unwrap();
        assert_eq!(one[0].ce_loss, evaluate(&w, Some(&plan), &eval, 1).unwrap().ce_loss);

        // a neuron whose W_O row is zero has no influence
        let mut dead = toy();
        let id = NeuronId::new(1, 4);
        for c in 0..8 {
            dead.layers[1].w_o.data_mut()[4 * 8 + c] = 0.0;
        }
        let curve = constant_sweep(&dead, &[id], &[-3.0, 0.0, 1.0, 7.5], &eval, 2).unwrap();
        assert!(curve.iter().all(|p| p.ce_loss == curve[0].ce_loss));
    }
}
