//! Attention-neuron ablation lab.
//!
//! A small byte-level decoder-only transformer ([`model`]) with a hookable
//! attention pre-out site ([`instrument`]), streaming activation statistics
//! ([`stats`]), zero / mean / peak / resampling ablation plans
//! ([`strategies`]), pruning sweeps and metrics ([`experiment`]), a
//! manual-backprop trainer ([`trainer`]) and CSV/SVG reporting ([`report`]).

pub mod error;
pub mod experiment;
pub mod instrument;
pub mod model;
pub mod report;
pub mod stats;
pub mod strategies;
pub mod tensor;
pub mod trainer;
pub mod workers;

pub use error::{Error, ErrorClass, Result};
