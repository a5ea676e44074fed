//! Continual learning for semantically-conditioned natural language
//! generation.
//!
//! The crate provides a small dialog-act conditioned LSTM generator with
//! exact gradients, exemplar replay with prioritized, random and herding
//! selection under a global budget, an exemplar-anchored EWC regularizer
//! with vocabulary-adaptive weight, knowledge distillation and L2 baselines,
//! and the metrics (slot error rate, corpus BLEU-4, Ω aggregates) used to
//! score a model after every task of a stream.

pub mod continual;
pub mod corpus;
pub mod error;
pub mod exemplar;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod regularizer;

pub use continual::{
    run_stream, Checkpoint, ExperimentResult, MethodSpec, ModelShape, Selection, TrainConfig,
    Variant,
};
pub use corpus::{
    DaInventory, DialogAct, Encoder, Example, SlotValue, Split, Task, TaskStream, Utterance, EOS,
};
pub use error::{Error, Result};
pub use exemplar::{ExemplarStore, PriorityList};
pub use metrics::EvalRecord;
pub use model::{Model, ModelConfig, ModelParams};
