//! Next-location prediction with smoothed cyclical timestamp embeddings.
//!
//! The crate is split bottom-up: [`numerics`] (dense kernels, parameter
//! store, Adam, gradient checking, checkpoints), [`temporal`] (timestamp
//! slots and Gaussian smoothing), [`flashback`] (spatiotemporal state
//! weighting), [`recurrent`] (cells and BPTT), [`data`] (ingestion, splits,
//! synthetic corpora, analyses), [`model`] (the full network and training)
//! and [`eval`] (ranking metrics and reports).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod flashback;
pub mod model;
pub mod numerics;
pub mod recurrent;
pub mod temporal;

pub use config::RunConfig;
pub use data::{CheckIn, Event, SplitCorpus, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{bandwidth_report, evaluate, rank_of_truth, BandwidthReport, EvalSplit, EvaluationReport};
pub use flashback::{flashback_weight, haversine_km, ContextDelta, FlashbackConfig, GeoPoint};
pub use model::{
    train_epoch, AnyModel, FlashbackModel, ModelConfig, PredictionScores, ReplayModel, SequenceModel, TrainOptions,
    TrainProgress, Variant,
};
pub use numerics::{adam_step, finite_diff_check, Checkpoint, DenseMatrix, OptimizerConfig, ParamStore};
pub use recurrent::CellKind;
pub use temporal::{TimestampIndex, TimestampScheme};
