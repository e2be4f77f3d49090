//! Plan builders for the four ablation methods: zero, mean, histogram peak,
//! and resampling from a randomized input.
//!
//! Mean and peak statistics pool every token position of every sequence in
//! the statistics dataset. Resampling freezes one random input per plan.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instrument::{
    capture_activations, AblationPlan, CaptureRequest, NeuronId, PlanMetadata, ReplacementSpec,
};
use crate::model::{chunk_corpus, forward, generate, GenerateMode, ModelConfig, ModelWeights, TokenSequence, MIN_VOCAB};
use crate::stats::{HistogramSpec, NeuronStats};
use crate::workers::map_ordered;

/// The 62 byte ids `[0-9A-Za-z]`.
pub const ALPHANUMERIC: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

/// How the randomized input behind a resample bank is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResampleKind {
    /// Uniform draws from the alphanumeric byte ids.
    Rs1,
    /// Uniform draws from all token ids, specials included.
    Rs2,
    /// Text sampled from the model itself, starting from one random token.
    Rs3,
}

impl ResampleKind {
    pub fn name(self) -> &'static str {
        match self {
            ResampleKind::Rs1 => "rs1",
            ResampleKind::Rs2 => "rs2",
            ResampleKind::Rs3 => "rs3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Zero,
    Mean,
    Peak,
    Resample(ResampleKind),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Zero,
        Method::Mean,
        Method::Peak,
        Method::Resample(ResampleKind::Rs1),
        Method::Resample(ResampleKind::Rs2),
        Method::Resample(ResampleKind::Rs3),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Zero => "zero",
            Method::Mean => "mean",
            Method::Peak => "peak",
            Method::Resample(k) => k.name(),
        }
    }

    /// Whether the method needs statistics over a dataset.
    pub fn needs_dataset(self) -> bool {
        matches!(self, Method::Mean | Method::Peak)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected zero|mean|peak|rs1|rs2|rs3)")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// An ordered, validated token dataset with a content hash.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRef {
    sequences: Vec<TokenSequence>,
    hash: String,
}

impl DatasetRef {
    pub fn new(sequences: Vec<TokenSequence>, config: &ModelConfig) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for s in &sequences {
            if s.is_empty() {
                return Err(Error::Shape("empty sequence in dataset".into()));
            }
            s.validate(config)?;
        }
        let mut h = Sha256::new();
        for s in &sequences {
            h.update((s.len() as u64).to_le_bytes());
            for id in s.ids() {
                h.update(id.to_le_bytes());
            }
        }
        let hash = format!("sha256:{}", hex::encode(h.finalize()));
        Ok(DatasetRef { sequences, hash })
    }

    /// Consecutive `seq_len` chunks of a byte corpus, at most `max_tokens`
    /// tokens in total.
    pub fn from_bytes(bytes: &[u8], seq_len: usize, max_tokens: usize, config: &ModelConfig) -> Result<Self> {
        Self::new(chunk_corpus(bytes, seq_len, max_tokens), config)
    }

    pub fn sequences(&self) -> &[TokenSequence] {
        &self.sequences
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(TokenSequence::len).sum()
    }
}

fn capture_layers(neurons: &[NeuronId]) -> Vec<usize> {
    neurons
        .iter()
        .map(|n| n.layer)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Per-neuron accumulators over every position of `data`.
///
/// Sequences are split into contiguous chunks processed on up to `workers`
/// threads; accumulator merging is exact, so the result does not depend on
/// the worker count.
pub fn collect_stats(
    weights: &ModelWeights,
    data: &DatasetRef,
    neurons: &[NeuronId],
    spec: HistogramSpec,
    workers: usize,
) -> Result<NeuronStats> {
    let cfg = weights.config();
    for n in neurons {
        n.validate(cfg)?;
    }
    let request = CaptureRequest::raw(capture_layers(neurons));
    let seqs = data.sequences();
    let chunk = seqs.len().div_ceil(workers.max(1));
    let chunks: Vec<&[TokenSequence]> = seqs.chunks(chunk).collect();
    let partials = map_ordered(workers, &chunks, |part| -> Result<NeuronStats> {
        let mut stats = NeuronStats::new(spec, neurons.to_vec())?;
        for rec in capture_activations(weights, part, &request, None)? {
            stats.observe_record(&rec?)?;
        }
        Ok(stats)
    });
    let mut total = NeuronStats::new(spec, neurons.to_vec())?;
    for p in partials {
        total.merge_from(&p?)?;
    }
    Ok(total)
}

fn metadata(method: Method) -> PlanMetadata {
    PlanMetadata {
        method: method.name().to_string(),
        ..Default::default()
    }
}

/// Every neuron replaced by exactly 0.
pub fn plan_zero(config: &ModelConfig, neurons: &[NeuronId]) -> Result<AblationPlan> {
    let entries = neurons.iter().map(|&n| (n, ReplacementSpec::Constant(0.0)));
    AblationPlan::new(config, entries, metadata(Method::Zero))
}

/// Mean or peak constants read off already collected statistics. Every
/// neuron tracked by `stats` gets an entry.
pub fn plan_from_stats(
    config: &ModelConfig,
    stats: &NeuronStats,
    method: Method,
    dataset_hash: &str,
) -> Result<AblationPlan> {
    let mut meta = metadata(method);
    meta.dataset_hash = Some(dataset_hash.to_string());
    meta.extra.insert("pooling".into(), "all-positions".into());
    let value = |id: NeuronId, acc: &crate::stats::NeuronAccumulator| -> Result<f32> {
        match method {
            Method::Mean => acc.mean(),
            Method::Peak => acc.peak().map_err(|e| match e {
                Error::NoInRangeValues => Error::NoInRangeObservations(id),
                other => other,
            }),
            other => Err(Error::Config(format!("{other} plans are not built from statistics"))),
        }
    };
    if method == Method::Peak {
        let s = stats.spec;
        meta.extra.insert("epsilon".into(), s.epsilon.to_string());
        meta.extra.insert("lo".into(), s.lo.to_string());
        meta.extra.insert("hi".into(), s.hi.to_string());
    }
    let entries = stats
        .iter()
        .map(|(id, acc)| Ok((id, ReplacementSpec::Constant(value(id, acc)?))))
        .collect::<Result<Vec<_>>>()?;
    AblationPlan::new(config, entries, meta)
}

/// Each neuron replaced by its mean over all positions of `data`.
pub fn plan_mean(weights: &ModelWeights, data: &DatasetRef, neurons: &[NeuronId], workers: usize) -> Result<AblationPlan> {
    let stats = collect_stats(weights, data, neurons, HistogramSpec::default(), workers)?;
    plan_from_stats(weights.config(), &stats, Method::Mean, data.hash())
}

/// Each neuron replaced by the center of its most populated histogram bin.
pub fn plan_peak(
    weights: &ModelWeights,
    data: &DatasetRef,
    neurons: &[NeuronId],
    spec: HistogramSpec,
    workers: usize,
) -> Result<AblationPlan> {
    let stats = collect_stats(weights, data, neurons, spec, workers)?;
    plan_from_stats(weights.config(), &stats, Method::Peak, data.hash())
}

/// A randomized input of `length` tokens. `model` is required for RS3.
pub fn make_resample_input(
    kind: ResampleKind,
    length: usize,
    seed: u64,
    model: Option<&ModelWeights>,
) -> Result<TokenSequence> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let alnum = |rng: &mut Xoshiro256PlusPlus| ALPHANUMERIC[rng.random_range(0..ALPHANUMERIC.len())] as u32;
    match kind {
        ResampleKind::Rs1 => Ok(TokenSequence((0..length).map(|_| alnum(&mut rng)).collect())),
        ResampleKind::Rs2 => Ok(TokenSequence(
            (0..length).map(|_| rng.random_range(0..MIN_VOCAB as u32)).collect(),
        )),
        ResampleKind::Rs3 => {
            let weights = model.ok_or(Error::MissingModel("rs3 resampling generates text with the model"))?;
            if length == 0 {
                return Ok(TokenSequence::default());
            }
            let start = TokenSequence(vec![alnum(&mut rng)]);
            let mode = GenerateMode::Sample {
                temperature: 1.0,
                seed: rng.random(),
            };
            generate(weights, &start, length - 1, mode)
        }
    }
}

/// Each neuron replaced position-wise by its activations on one frozen
/// randomized input of `bank_length` tokens.
pub fn plan_resample(
    weights: &ModelWeights,
    kind: ResampleKind,
    neurons: &[NeuronId],
    bank_length: usize,
    seed: u64,
) -> Result<AblationPlan> {
    if bank_length == 0 {
        return Err(Error::Config("resample bank length must be >= 1".into()));
    }
    let cfg = weights.config();
    for n in neurons {
        n.validate(cfg)?;
    }
    let input = make_resample_input(kind, bank_length, seed, Some(weights))?;
    let request = CaptureRequest::raw(capture_layers(neurons));
    let record = forward(weights, &input, None, Some(&request))?
        .record
        .expect("capture requested");
    let bank = format!("{}-seed{seed}", kind.name());
    let d = cfg.d_model;
    let entries = neurons.iter().map(|&id| {
        let col = record.layer_values(id.layer).expect("layer captured");
        let values = (0..bank_length).map(|t| col[t * d + id.neuron]).collect();
        (
            id,
            ReplacementSpec::ResampleBank {
                bank: bank.clone(),
                values,
            },
        )
    });
    let mut meta = metadata(Method::Resample(kind));
    meta.seed = Some(seed);
    meta.extra.insert("bank_length".into(), bank_length.to_string());
    meta.extra.insert("bank_policy".into(), "frozen-per-plan".into());
    if kind == ResampleKind::Rs3 {
        meta.extra.insert("generator".into(), "self".into());
    }
    AblationPlan::new(cfg, entries, meta)
}

/// Builds the plan for `method` over `neurons`. `data` is required for
/// mean and peak; `seed` and `bank_length` only matter for resampling.
#[allow(clippy::too_many_arguments)]
pub fn build_plan(
    weights: &ModelWeights,
    method: Method,
    neurons: &[NeuronId],
    data: Option<&DatasetRef>,
    spec: HistogramSpec,
    bank_length: usize,
    seed: u64,
    workers: usize,
) -> Result<AblationPlan> {
    let need_data = || data.ok_or_else(|| Error::Config(format!("{method} ablation needs a statistics dataset")));
    match method {
        Method::Zero => plan_zero(weights.config(), neurons),
        Method::Mean => plan_mean(weights, need_data()?, neurons, workers),
        Method::Peak => plan_peak(weights, need_data()?, neurons, spec, workers),
        Method::Resample(kind) => plan_resample(weights, kind, neurons, bank_length, seed),
    }
}
