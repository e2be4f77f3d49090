use std::path::PathBuf;

use crate::instrument::NeuronId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid neuron {neuron} (config has {n_layers} layers of width {d_model})")]
    InvalidNeuron {
        neuron: NeuronId,
        n_layers: usize,
        d_model: usize,
    },

    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("sequence length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed weight container: {0}")]
    Format(String),

    #[error("content hash mismatch: header says {expected}, blob hashes to {actual}")]
    HashMismatch { expected: String, actual: String },

    #[error("histogram specs differ")]
    SpecMismatch,

    #[error("accumulator is empty")]
    EmptyAccumulator,

    #[error("accumulator has no in-range observations")]
    NoInRangeValues,

    #[error("neuron {0} has no in-range observations")]
    NoInRangeObservations(NeuronId),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("resample kind {0} needs a model to generate from")]
    MissingModel(&'static str),

    #[error("corpus has {len} bytes, need at least {need}")]
    CorpusTooSmall { len: usize, need: usize },

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonFinite(_) | Error::Diverged { .. } => ErrorClass::Numeric,
            Error::Config(_) | Error::InvalidNeuron { .. } | Error::MissingModel(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }
}
