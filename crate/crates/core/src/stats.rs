//! Streaming, mergeable per-neuron activation statistics.
//!
//! A [`NeuronAccumulator`] keeps count, exact sum and sum of squares,
//! min/max, and a fixed-width histogram over `[lo, hi)`. Two accumulators
//! with the same [`HistogramSpec`] merge by adding counters, and because
//! the sums are held exactly ([`ExactSum`]), merging any split of a stream
//! reproduces single-pass accumulation bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::{ActivationRecord, NeuronId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub epsilon: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            epsilon: 0.01,
            lo: -10.0,
            hi: 10.0,
        }
    }
}

impl HistogramSpec {
    pub fn new(epsilon: f64, lo: f64, hi: f64) -> Result<Self> {
        let spec = HistogramSpec { epsilon, lo, hi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let HistogramSpec { epsilon, lo, hi } = *self;
        if !(epsilon > 0.0 && lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Config(format!(
                "histogram needs epsilon > 0 and lo < hi, got {self:?}"
            )));
        }
        let ratio = (hi - lo) / epsilon;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() > 1e8 {
            return Err(Error::Config(format!(
                "range [{lo}, {hi}) is not a whole number of {epsilon}-wide bins"
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        ((self.hi - self.lo) / self.epsilon).round() as usize
    }

    /// Lower edge of bin `k` (`k == n_bins` gives `hi`).
    pub fn edge(&self, k: usize) -> f64 {
        if k == self.n_bins() {
            self.hi
        } else {
            self.lo + k as f64 * self.epsilon
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.epsilon + self.epsilon / 2.0
    }

    /// Bin holding `value`, with `edge(k) <= value < edge(k + 1)`; `None`
    /// outside `[lo, hi)`.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        if value < self.lo || value >= self.hi {
            return None;
        }
        let n = self.n_bins();
        let mut k = (((value - self.lo) / self.epsilon).floor() as usize).min(n - 1);
        // the division can land one bin off near an edge; settle against the edges themselves
        if k + 1 < n && value >= self.edge(k + 1) {
            k += 1;
        } else if k > 0 && value < self.edge(k) {
            k -= 1;
        }
        Some(k)
    }
}

/// Order-independent exact sum of `f64` values.
///
/// Each value is split into an integer mantissa and a binary exponent and
/// the mantissa is added to an `i128` bucket for that exponent. Integer
/// addition is associative, so the buckets are the same for any grouping
/// of the same multiset of values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactSum {
    buckets: BTreeMap<i32, i128>,
}

impl ExactSum {
    pub fn add(&mut self, value: f64) {
        debug_assert!(value.is_finite());
        if value == 0.0 {
            return;
        }
        let bits = value.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let exp_field = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mantissa, exp) = if exp_field == 0 {
            (frac, -1074)
        } else {
            (frac | (1 << 52), exp_field - 1075)
        };
        *self.buckets.entry(exp).or_insert(0) += sign * mantissa;
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for (&e, &m) in &other.buckets {
            *self.buckets.entry(e).or_insert(0) += m;
        }
    }

    pub fn value(&self) -> f64 {
        self.buckets
            .iter()
            .map(|(&e, &m)| m as f64 * 2f64.powi(e))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronAccumulator {
    spec: HistogramSpec,
    count: u64,
    sum: ExactSum,
    sum_sq: ExactSum,
    min: f32,
    max: f32,
    bins: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl NeuronAccumulator {
    pub fn new(spec: HistogramSpec) -> Result<Self> {
        spec.validate()?;
        Ok(NeuronAccumulator {
            spec,
            count: 0,
            sum: ExactSum::default(),
            sum_sq: ExactSum::default(),
            min: f32::INFINITY,
            max: f32::NEG_INFINITY,
            bins: vec![0; spec.n_bins()],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn observe(&mut self, value: f32) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("observed activation {value}")));
        }
        let v = value as f64;
        self.count += 1;
        self.sum.add(v);
        self.sum_sq.add(v * v);
        self.min = self.min.min(value);
        self.max = self.max.max(value);
        match self.spec.bin_of(v) {
            Some(k) => self.bins[k] += 1,
            None if v < self.spec.lo => self.underflow += 1,
            None => self.overflow += 1,
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &NeuronAccumulator) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::SpecMismatch);
        }
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn merge(&self, other: &NeuronAccumulator) -> Result<NeuronAccumulator> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn min(&self) -> Option<f32> {
        (self.count > 0).then_some(self.min)
    }

    pub fn max(&self) -> Option<f32> {
        (self.count > 0).then_some(self.max)
    }

    pub fn sum(&self) -> f64 {
        self.sum.value()
    }

    pub fn mean(&self) -> Result<f32> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok((self.sum.value() / self.count as f64) as f32)
    }

    /// Population variance.
    pub fn variance(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let n = self.count as f64;
        let mean = self.sum.value() / n;
        Ok((self.sum_sq.value() / n - mean * mean).max(0.0))
    }

    /// Center of the most populated in-range bin; ties go to the lowest bin.
    /// Under/overflow counts never compete.
    pub fn peak(&self) -> Result<f32> {
        let mut best: Option<(usize, u64)> = None;
        for (k, &c) in self.bins.iter().enumerate() {
            if c > 0 && best.map_or(true, |(_, bc)| c > bc) {
                best = Some((k, c));
            }
        }
        best.map(|(k, _)| self.spec.center(k) as f32)
            .ok_or(Error::NoInRangeValues)
    }

    pub fn export_histogram(&self) -> HistogramExport {
        let n = self.spec.n_bins();
        HistogramExport {
            spec: self.spec,
            edges: (0..=n).map(|k| self.spec.edge(k)).collect(),
            counts: self.bins.clone(),
            underflow: self.underflow,
            overflow: self.overflow,
        }
    }
}

/// Plot-ready histogram: `n_bins + 1` edges and `n_bins` counts, plus the
/// out-of-range tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramExport {
    pub spec: HistogramSpec,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl HistogramExport {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Smallest bin range covering every non-empty bin, if any.
    pub fn occupied(&self) -> Option<(usize, usize)> {
        let first = self.counts.iter().position(|&c| c > 0)?;
        let last = self.counts.iter().rposition(|&c| c > 0)?;
        Some((first, last + 1))
    }

    /// CSV with header `bin_lo,bin_hi,count`. Bins outside `range` are
    /// omitted; under/overflow rows use `-inf`/`inf` as the open edge.
    pub fn to_csv(&self, range: Option<(usize, usize)>) -> Result<String> {
        let (from, to) = range.unwrap_or((0, self.counts.len()));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        w.write_record(["-inf".to_string(), self.spec.lo.to_string(), self.underflow.to_string()])?;
        for k in from..to {
            w.write_record([
                self.edges[k].to_string(),
                self.edges[k + 1].to_string(),
                self.counts[k].to_string(),
            ])?;
        }
        w.write_record([self.spec.hi.to_string(), "inf".to_string(), self.overflow.to_string()])?;
        let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Accumulators for a set of neurons, fed from captured activation records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronStats {
    pub spec: HistogramSpec,
    pub neurons: Vec<NeuronId>,
    pub accumulators: Vec<NeuronAccumulator>,
}

impl NeuronStats {
    pub fn new(spec: HistogramSpec, neurons: Vec<NeuronId>) -> Result<Self> {
        let acc = NeuronAccumulator::new(spec)?;
        Ok(NeuronStats {
            spec,
            accumulators: vec![acc; neurons.len()],
            neurons,
        })
    }

    /// Adds every position of `record` for each tracked neuron.
    pub fn observe_record(&mut self, record: &ActivationRecord) -> Result<()> {
        let d = record.d_model();
        for (id, acc) in self.neurons.iter().zip(&mut self.accumulators) {
            let values = record.layer_values(id.layer).ok_or_else(|| {
                Error::Config(format!("record has no capture for layer {}", id.layer))
            })?;
            for t in 0..record.seq_len() {
                acc.observe(values[t * d + id.neuron])?;
            }
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &NeuronStats) -> Result<()> {
        if self.neurons != other.neurons {
            return Err(Error::Config("merging stats over different neuron sets".into()));
        }
        for (a, b) in self.accumulators.iter_mut().zip(&other.accumulators) {
            a.merge_from(b)?;
        }
        Ok(())
    }

    pub fn get(&self, id: NeuronId) -> Option<&NeuronAccumulator> {
        self.neurons
            .iter()
            .position(|n| *n == id)
            .map(|i| &self.accumulators[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, &NeuronAccumulator)> {
        self.neurons.iter().copied().zip(&self.accumulators)
    }
}
