//! Attention pre-out neuron addressing, ablation plans and activation capture.
//!
//! Neuron `n` of layer `l` is column `n` of the `[T × d_model]` pre-out
//! matrix at that layer, i.e. the concatenation of every head's
//! softmax-weighted value sum before `W_O`. Neuron `n` belongs to head
//! `n / d_head`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, ModelConfig, ModelWeights, TokenSequence};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub neuron: usize,
}

impl NeuronId {
    pub fn new(layer: usize, neuron: usize) -> Self {
        NeuronId { layer, neuron }
    }

    pub fn head(&self, config: &ModelConfig) -> usize {
        self.neuron / config.d_head()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.layer < config.n_layers && self.neuron < config.d_model {
            Ok(())
        } else {
            Err(Error::InvalidNeuron {
                neuron: *self,
                n_layers: config.n_layers,
                d_model: config.d_model,
            })
        }
    }

    /// Every neuron of a config, layer-major.
    pub fn universe(config: &ModelConfig) -> Vec<NeuronId> {
        (0..config.n_layers)
            .flat_map(|l| (0..config.d_model).map(move |n| NeuronId::new(l, n)))
            .collect()
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.neuron)
    }
}

impl FromStr for NeuronId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("neuron id {s:?} is not LAYER:NEURON"));
        let (l, n) = s.split_once(':').ok_or_else(bad)?;
        Ok(NeuronId::new(
            l.trim().parse().map_err(|_| bad())?,
            n.trim().parse().map_err(|_| bad())?,
        ))
    }
}

/// Parses a neuron set: `all`, `layer:L`, or a comma-separated `L:N` list.
/// Every id is validated against `config`; duplicates are rejected.
pub fn parse_neuron_spec(spec: &str, config: &ModelConfig) -> Result<Vec<NeuronId>> {
    let spec = spec.trim();
    let ids = if spec == "all" {
        NeuronId::universe(config)
    } else if let Some(l) = spec.strip_prefix("layer:") {
        let layer: usize = l
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("neuron spec {spec:?}: bad layer")))?;
        if layer >= config.n_layers {
            return Err(Error::InvalidNeuron {
                neuron: NeuronId::new(layer, 0),
                n_layers: config.n_layers,
                d_model: config.d_model,
            });
        }
        (0..config.d_model).map(|n| NeuronId::new(layer, n)).collect()
    } else {
        spec.split(',').map(str::parse).collect::<Result<Vec<NeuronId>>>()?
    };
    let mut seen = std::collections::BTreeSet::new();
    for id in &ids {
        id.validate(config)?;
        if !seen.insert(*id) {
            return Err(Error::Config(format!("neuron {id} listed twice")));
        }
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplacementSpec {
    Constant(f32),
    /// Per-position values; position `t` reads `values[t % values.len()]`.
    ResampleBank { bank: String, values: Vec<f32> },
}

impl ReplacementSpec {
    fn validate(&self, id: NeuronId) -> Result<()> {
        match self {
            ReplacementSpec::Constant(c) if !c.is_finite() => {
                Err(Error::NonFinite(format!("constant for neuron {id}")))
            }
            ReplacementSpec::ResampleBank { values, .. } if values.is_empty() => {
                Err(Error::Config(format!("empty resample bank for neuron {id}")))
            }
            ReplacementSpec::ResampleBank { values, .. } if values.iter().any(|v| !v.is_finite()) => {
                Err(Error::NonFinite(format!("resample bank for neuron {id}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn value_at(&self, position: usize) -> f32 {
        match self {
            ReplacementSpec::Constant(c) => *c,
            ReplacementSpec::ResampleBank { values, .. } => values[position % values.len()],
        }
    }

    pub fn constant(&self) -> Option<f32> {
        match self {
            ReplacementSpec::Constant(c) => Some(*c),
            ReplacementSpec::ResampleBank { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanMetadata {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// Immutable map from neurons to their replacement rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationPlan {
    n_layers: usize,
    d_model: usize,
    entries: BTreeMap<NeuronId, ReplacementSpec>,
    metadata: PlanMetadata,
}

impl AblationPlan {
    pub fn empty(config: &ModelConfig) -> Self {
        AblationPlan {
            n_layers: config.n_layers,
            d_model: config.d_model,
            entries: BTreeMap::new(),
            metadata: PlanMetadata::default(),
        }
    }

    /// Rejects duplicate keys, out-of-range neurons, non-finite values and
    /// empty banks.
    pub fn new(
        config: &ModelConfig,
        entries: impl IntoIterator<Item = (NeuronId, ReplacementSpec)>,
        metadata: PlanMetadata,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, spec) in entries {
            id.validate(config)?;
            spec.validate(id)?;
            if map.insert(id, spec).is_some() {
                return Err(Error::Config(format!("neuron {id} appears twice in plan")));
            }
        }
        Ok(AblationPlan {
            n_layers: config.n_layers,
            d_model: config.d_model,
            entries: map,
            metadata,
        })
    }

    pub fn validate_for(&self, config: &ModelConfig) -> Result<()> {
        for id in self.entries.keys() {
            id.validate(config)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: NeuronId) -> Option<&ReplacementSpec> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NeuronId, &ReplacementSpec)> {
        self.entries.iter()
    }

    pub fn neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.entries.keys().copied()
    }

    pub fn metadata(&self) -> &PlanMetadata {
        &self.metadata
    }

    pub fn layer_entries(&self, layer: usize) -> impl Iterator<Item = (usize, &ReplacementSpec)> {
        self.entries
            .range(NeuronId::new(layer, 0)..NeuronId::new(layer + 1, 0))
            .map(|(id, spec)| (id.neuron, spec))
    }

    /// Whether every entry is a constant (zero, mean, peak, or a constant sweep).
    pub fn is_constant(&self) -> bool {
        self.entries
            .values()
            .all(|s| matches!(s, ReplacementSpec::Constant(_)))
    }

    /// Restricts the plan to `neurons`, keeping metadata.
    pub fn subset(&self, neurons: &[NeuronId]) -> Self {
        let entries = neurons
            .iter()
            .filter_map(|id| self.entries.get(id).map(|s| (*id, s.clone())))
            .collect();
        AblationPlan {
            n_layers: self.n_layers,
            d_model: self.d_model,
            entries,
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PlanFile {
            meta: self.metadata.clone(),
            n_layers: self.n_layers,
            d_model: self.d_model,
            entries: self
                .entries
                .iter()
                .map(|(id, spec)| EntryFile {
                    layer: id.layer,
                    neuron: id.neuron,
                    rule: match spec {
                        ReplacementSpec::Constant(value) => RuleFile::Constant { value: *value },
                        ReplacementSpec::ResampleBank { bank, values } => RuleFile::Resample {
                            bank: bank.clone(),
                            values: values.clone(),
                        },
                    },
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a plan, validating it against the dimensions it declares.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PlanFile = serde_json::from_str(text)?;
        let config = ModelConfig {
            n_layers: file.n_layers,
            d_model: file.d_model,
            n_heads: 1,
            ..ModelConfig::default()
        };
        let entries = file.entries.into_iter().map(|e| {
            let spec = match e.rule {
                RuleFile::Constant { value } => ReplacementSpec::Constant(value),
                RuleFile::Resample { bank, values } => ReplacementSpec::ResampleBank { bank, values },
            };
            (NeuronId::new(e.layer, e.neuron), spec)
        });
        AblationPlan::new(&config, entries, file.meta)
    }
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    #[serde(flatten)]
    meta: PlanMetadata,
    n_layers: usize,
    d_model: usize,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    layer: usize,
    neuron: usize,
    #[serde(flatten)]
    rule: RuleFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum RuleFile {
    Constant { value: f32 },
    Resample { bank: String, values: Vec<f32> },
}

/// Replaces the planned columns of a `[T × d_model]` pre-out matrix.
pub fn apply_ablation(z: &Tensor, layer: usize, plan: &AblationPlan) -> Result<Tensor> {
    let (t, d) = z.dims2()?;
    if d != plan.d_model {
        return Err(Error::Shape(format!(
            "pre-out width {d} but plan is for d_model {}",
            plan.d_model
        )));
    }
    let mut out = z.clone();
    apply_ablation_in_place(out.data_mut(), t, d, layer, plan);
    Ok(out)
}

pub(crate) fn apply_ablation_in_place<R: Real>(z: &mut [R], t: usize, d: usize, layer: usize, plan: &AblationPlan) {
    for (n, spec) in plan.layer_entries(layer) {
        for pos in 0..t {
            z[pos * d + n] = R::from_f64(spec.value_at(pos) as f64);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptureMode {
    /// Values as computed, before any replacement.
    Raw,
    /// Values after the plan's replacements, i.e. what `W_O` consumes.
    Ablated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRequest {
    pub layers: Vec<usize>,
    pub mode: CaptureMode,
}

impl CaptureRequest {
    pub fn raw(layers: Vec<usize>) -> Self {
        CaptureRequest {
            layers,
            mode: CaptureMode::Raw,
        }
    }

    pub fn ablated(layers: Vec<usize>) -> Self {
        CaptureRequest {
            layers,
            mode: CaptureMode::Ablated,
        }
    }

    pub fn all_layers(config: &ModelConfig, mode: CaptureMode) -> Self {
        CaptureRequest {
            layers: (0..config.n_layers).collect(),
            mode,
        }
    }

    pub fn validate_for(&self, config: &ModelConfig) -> Result<()> {
        match self.layers.iter().find(|&&l| l >= config.n_layers) {
            Some(&l) => Err(Error::Config(format!(
                "capture layer {l} out of range for {} layers",
                config.n_layers
            ))),
            None => Ok(()),
        }
    }
}

/// Captured pre-out values of one sequence, `[T × d_model]` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub tag: String,
    seq_len: usize,
    d_model: usize,
    layers: Vec<usize>,
    values: Vec<Vec<f32>>,
}

impl ActivationRecord {
    pub(crate) fn empty(req: &CaptureRequest, seq_len: usize, d_model: usize) -> Self {
        ActivationRecord {
            tag: String::new(),
            seq_len,
            d_model,
            layers: req.layers.clone(),
            values: vec![Vec::new(); req.layers.len()],
        }
    }

    pub(crate) fn store<R: Real>(&mut self, layer: usize, z: &[R]) {
        if let Some(i) = self.layers.iter().position(|&l| l == layer) {
            self.values[i] = z.iter().map(|&v| v.to_f64() as f32).collect();
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn layer_values(&self, layer: usize) -> Option<&[f32]> {
        let i = self.layers.iter().position(|&l| l == layer)?;
        Some(&self.values[i])
    }

    pub fn get(&self, layer: usize, position: usize, neuron: usize) -> Option<f32> {
        if position >= self.seq_len || neuron >= self.d_model {
            return None;
        }
        self.layer_values(layer)
            .map(|v| v[position * self.d_model + neuron])
    }

    pub fn value_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }
}

/// Lazily runs the model over `dataset`, yielding one record per sequence
/// in input order. Only the record being consumed is held in memory.
pub fn capture_activations<'a>(
    weights: &'a ModelWeights,
    dataset: &'a [TokenSequence],
    request: &'a CaptureRequest,
    plan: Option<&'a AblationPlan>,
) -> Result<impl Iterator<Item = Result<ActivationRecord>> + 'a> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    request.validate_for(weights.config())?;
    Ok(dataset.iter().enumerate().map(move |(i, seq)| {
        let mut rec = forward(weights, seq, plan, Some(request))?
            .record
            .expect("capture requested");
        rec.tag = format!("seq{i}");
        Ok(rec)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logits;
    use proptest::prelude::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            max_seq: 16,
            ..Default::default()
        }
    }

    fn z(t: usize, seed: u32) -> Tensor {
        let data = (0..t * 8)
            .map(|i| (((i as u32).wrapping_mul(2654435761u32) ^ seed) % 1000) as f32 / 100.0 - 5.0)
            .collect();
        Tensor::new(vec![t, 8], data).unwrap()
    }

    fn constant_plan(ids: &[(usize, usize)], c: f32) -> AblationPlan {
        AblationPlan::new(
            &cfg(),
            ids.iter().map(|&(l, n)| (NeuronId::new(l, n), ReplacementSpec::Constant(c))),
            PlanMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn empty_plan_is_identity() {
        let input = z(4, 1);
        let out = apply_ablation(&input, 0, &AblationPlan::empty(&cfg())).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn constant_zero_sets_one_column() {
        let input = z(5, 2);
        let out = apply_ablation(&input, 0, &constant_plan(&[(0, 3)], 0.0)).unwrap();
        for t in 0..5 {
            for n in 0..8 {
                let want = if n == 3 { 0.0 } else { input.row(t)[n] };
                assert_eq!(out.row(t)[n].to_bits(), want.to_bits());
            }
        }
        // other layers untouched
        assert_eq!(apply_ablation(&input, 1, &constant_plan(&[(0, 3)], 0.0)).unwrap(), input);
    }

    #[test]
    fn bank_wraps_modulo_length() {
        let plan = AblationPlan::new(
            &cfg(),
            [(
                NeuronId::new(1, 2),
                ReplacementSpec::ResampleBank {
                    bank: "b".into(),
                    values: vec![1.0, 2.0],
                },
            )],
            PlanMetadata::default(),
        )
        .unwrap();
        let out = apply_ablation(&z(3, 3), 1, &plan).unwrap();
        let col: Vec<f32> = (0..3).map(|t| out.row(t)[2]).collect();
        assert_eq!(col, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn plan_construction_errors() {
        let c = cfg();
        let dup = [
            (NeuronId::new(0, 1), ReplacementSpec::Constant(0.0)),
            (NeuronId::new(0, 1), ReplacementSpec::Constant(1.0)),
        ];
        assert!(AblationPlan::new(&c, dup, PlanMetadata::default()).is_err());
        let out_of_range = [(NeuronId::new(2, 0), ReplacementSpec::Constant(0.0))];
        assert!(matches!(
            AblationPlan::new(&c, out_of_range, PlanMetadata::default()),
            Err(Error::InvalidNeuron { .. })
        ));
        let nan = [(NeuronId::new(0, 0), ReplacementSpec::Constant(f32::NAN))];
        assert!(AblationPlan::new(&c, nan, PlanMetadata::default()).is_err());
        let empty_bank = [(
            NeuronId::new(0, 0),
            ReplacementSpec::ResampleBank {
                bank: "x".into(),
                values: vec![],
            },
        )];
        assert!(AblationPlan::new(&c, empty_bank, PlanMetadata::default()).is_err());
    }

    #[test]
    fn forward_rejects_plan_for_larger_model() {
        let big = ModelConfig {
            n_layers: 4,
            ..cfg()
        };
        let plan = AblationPlan::new(
            &big,
            [(NeuronId::new(3, 0), ReplacementSpec::Constant(0.0))],
            PlanMetadata::default(),
        )
        .unwrap();
        let w = ModelWeights::init(cfg(), 0.1, 1).unwrap();
        assert!(matches!(
            forward(&w, &TokenSequence(vec![1]), Some(&plan), None),
            Err(Error::InvalidNeuron { .. })
        ));
    }

    #[test]
    fn neuron_id_parsing_and_heads() {
        let id: NeuronId = "1:7".parse().unwrap();
        assert_eq!(id, NeuronId::new(1, 7));
        assert_eq!(id.to_string(), "1:7");
        assert_eq!(id.head(&cfg()), 1);
        assert!("17".parse::<NeuronId>().is_err());
        assert_eq!(NeuronId::universe(&cfg()).len(), 16);
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = AblationPlan::new(
            &cfg(),
            [
                (NeuronId::new(0, 1), ReplacementSpec::Constant(-0.123_456_79)),
                (
                    NeuronId::new(1, 5),
                    ReplacementSpec::ResampleBank {
                        bank: "rs1:seed=3".into(),
                        values: vec![0.1, 1e-7, -3.5],
                    },
                ),
            ],
            PlanMetadata {
                method: "mixed".into(),
                seed: Some(3),
                dataset_hash: Some("sha256:abc".into()),
                extra: [("bank_policy".to_string(), "frozen".to_string())].into(),
            },
        )
        .unwrap();
        let text = plan.to_json().unwrap();
        let back = AblationPlan::from_json(&text).unwrap();
        assert_eq!(back, plan);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["method"], "mixed");
        assert_eq!(v["entries"][0]["variant"], "constant");
        assert_eq!(v["entries"][1]["variant"], "resample");
    }

    #[test]
    fn capture_counts_and_order() {
        let c = ModelConfig {
            n_layers: 1,
            ..cfg()
        };
        let w = ModelWeights::init(c, 0.1, 2).unwrap();
        let req = CaptureRequest::raw(vec![0]);
        let one = [TokenSequence(vec![5])];
        let recs: Vec<_> = capture_activations(&w, &one, &req, None)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].value_count(), 8);

        let two = [TokenSequence(vec![5, 6]), TokenSequence(vec![7])];
        let recs: Vec<_> = capture_activations(&w, &two, &req, None)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(recs[0].seq_len(), 2);
        assert_eq!(recs[1].seq_len(), 1);
        assert_eq!(recs[0].tag, "seq0");
        let direct = forward(&w, &two[1], None, Some(&req)).unwrap().record.unwrap();
        assert_eq!(recs[1].layer_values(0), direct.layer_values(0));

        assert!(matches!(
            capture_activations(&w, &[], &req, None).map(|_| ()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn ablated_capture_sees_replacement() {
        let w = ModelWeights::init(cfg(), 0.1, 3).unwrap();
        let plan = constant_plan(&[(1, 4)], 2.5);
        let seq = TokenSequence(vec![1, 2, 3]);
        let out = forward(&w, &seq, Some(&plan), Some(&CaptureRequest::ablated(vec![1]))).unwrap();
        let rec = out.record.unwrap();
        assert!((0..3).all(|t| rec.get(1, t, 4) == Some(2.5)));
        let raw = forward(&w, &seq, Some(&plan), Some(&CaptureRequest::raw(vec![1]))).unwrap();
        assert_ne!(raw.record.unwrap().get(1, 0, 4), Some(2.5));
        assert_ne!(out.logits, logits(&w, &seq).unwrap());
    }

    proptest! {
        #[test]
        fn constant_plans_are_idempotent(seed in 0u32..500, c in -3.0f32..3.0, n in 0usize..8) {
            let plan = constant_plan(&[(0, n), (0, (n + 3) % 8)], c);
            let input = z(4, seed);
            let once = apply_ablation(&input, 0, &plan).unwrap();
            let twice = apply_ablation(&once, 0, &plan).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn disjoint_plans_commute(seed in 0u32..500, a in 0usize..4, b in 4usize..8) {
            let pa = constant_plan(&[(0, a)], 1.5);
            let pb = AblationPlan::new(
                &cfg(),
                [(NeuronId::new(0, b), ReplacementSpec::ResampleBank { bank: "b".into(), values: vec![0.5, -0.5, 2.0] })],
                PlanMetadata::default(),
            ).unwrap();
            let input = z(5, seed);
            let ab = apply_ablation(&apply_ablation(&input, 0, &pa).unwrap(), 0, &pb).unwrap();
            let ba = apply_ablation(&apply_ablation(&input, 0, &pb).unwrap(), 0, &pa).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn unplanned_columns_are_untouched(seed in 0u32..500, mask in 0u8..=255) {
            let ids: Vec<(usize, usize)> = (0..8).filter(|n| mask & (1 << n) != 0).map(|n| (0, n)).collect();
            let plan = constant_plan(&ids, 9.0);
            let input = z(3, seed);
            let out = apply_ablation(&input, 0, &plan).unwrap();
            for t in 0..3 {
                for n in 0..8 {
                    if mask & (1 << n) == 0 {
                        prop_assert_eq!(out.row(t)[n].to_bits(), input.row(t)[n].to_bits());
                    } else {
                        prop_assert_eq!(out.row(t)[n], 9.0);
                    }
                }
            }
        }
    }

    #[test]
    fn neuron_specs() {
        let c = cfg();
        assert_eq!(parse_neuron_spec("all", &c).unwrap().len(), 16);
        let l1 = parse_neuron_spec("layer:1", &c).unwrap();
        assert_eq!(l1.len(), 8);
        assert!(l1.iter().all(|id| id.layer == 1));
        assert_eq!(
            parse_neuron_spec("0:3, 1:7", &c).unwrap(),
            vec![NeuronId::new(0, 3), NeuronId::new(1, 7)]
        );
        assert!(parse_neuron_spec("layer:2", &c).is_err());
        assert!(parse_neuron_spec("0:8", &c).is_err());
        assert!(parse_neuron_spec("0:1,0:1", &c).is_err());
        assert!(parse_neuron_spec("bogus", &c).is_err());
    }
}
