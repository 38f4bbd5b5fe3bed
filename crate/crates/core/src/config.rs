//! Run configuration file.
//!
//! ```toml
//! seed = 7
//! out = "runs/replay"
//!
//! [data]
//! path = "checkins.csv"
//! train_fraction = 0.8
//!
//! [model]
//! variant = "replay"     # or set use_ste / use_query_time / ... directly
//! cell = "gru"
//!
//! [time]
//! scale = "week"
//! granularity = "hour"
//!
//! [flashback]
//! alpha = 0.1
//! beta = 100.0
//! window = 20
//!
//! [optimizer]
//! learning_rate = 0.01
//!
//! [training]
//! epochs = 30
//! ```
//!
//! Every section and key is optional except `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DEFAULT_TRAIN_FRACTION, MIN_CHECKINS_PER_USER};
use crate::error::{Error, Result};
use crate::flashback::FlashbackConfig;
use crate::model::{ModelConfig, TrainOptions, Variant};
use crate::numerics::params::INIT_SCALE;
use crate::numerics::OptimizerConfig;
use crate::recurrent::CellKind;
use crate::temporal::TimestampScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub train_fraction: f64,
    pub min_checkins: usize,
    /// Single-byte field separator.
    pub delimiter: char,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            min_checkins: MIN_CHECKINS_PER_USER,
            delimiter: ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Named variant; overrides the four flags below.
    pub variant: Option<String>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub cell: CellKind,
    pub use_ste: bool,
    pub use_query_time: bool,
    pub fixed_bandwidth: Option<f64>,
    pub multi_granularity: bool,
    pub init_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            variant: None,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            cell: m.cell,
            use_ste: m.use_ste,
            use_query_time: m.use_query_time,
            fixed_bandwidth: m.fixed_bandwidth,
            multi_granularity: m.multi_granularity,
            init_scale: INIT_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: u64,
    pub bptt_window: Option<usize>,
    pub shuffle: bool,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub save_every: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            epochs: 20,
            bptt_window: t.bptt_window,
            shuffle: t.shuffle,
            save_every: 0,
        }
    }
}

impl TrainingSection {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            bptt_window: self.bptt_window,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelSection,
    pub time: TimestampScheme,
    pub flashback: FlashbackConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("config bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("{}: {field}", path.display()), message),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::config("seed", "a seed is required"))
    }

    pub fn variant(&self) -> Result<Option<Variant>> {
        self.model.variant.as_deref().map(str::parse).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.variant()?;
        if !(0.0..=1.0).contains(&self.data.train_fraction) {
            return Err(Error::config("data.train_fraction", "must lie in [0, 1]"));
        }
        if !self.data.delimiter.is_ascii() {
            return Err(Error::config("data.delimiter", "must be a single ASCII character"));
        }
        if self.training.bptt_window == Some(0) {
            return Err(Error::config("training.bptt_window", "must be >= 1"));
        }
        self.optimizer.validate()?;
        self.flashback.validate()
    }

    /// Model configuration for a corpus of the given size.
    pub fn model_config(&self, user_count: usize, poi_count: usize) -> Result<ModelConfig> {
        let m = &self.model;
        let mut cfg = ModelConfig {
            poi_count,
            user_count,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            cell: m.cell,
            scheme: self.time,
            flashback: self.flashback,
            use_ste: m.use_ste,
            use_query_time: m.use_query_time,
            fixed_bandwidth: m.fixed_bandwidth,
            multi_granularity: m.multi_granularity,
            init_scale: m.init_scale,
        };
        if let Some(v) = self.variant()? {
            v.apply(&mut cfg);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
