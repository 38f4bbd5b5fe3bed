use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flashback::FlashbackConfig;
use crate::numerics::params::INIT_SCALE;
use crate::recurrent::CellKind;
use crate::temporal::TimestampScheme;

/// Bandwidth used by the fixed-bandwidth variant when none is configured.
pub const DEFAULT_FIXED_BANDWIDTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub poi_count: usize,
    pub user_count: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub cell: CellKind,
    pub scheme: TimestampScheme,
    pub flashback: FlashbackConfig,
    /// Feed smoothed timestamp embeddings into the recurrence.
    pub use_ste: bool,
    /// Condition the prediction head on the query timestamp.
    pub use_query_time: bool,
    /// Pin every bandwidth to this value instead of learning it.
    pub fixed_bandwidth: Option<f64>,
    /// Hour-in-day and day-in-week tables instead of one table for `scheme`.
    pub multi_granularity: bool,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            poi_count: 0,
            user_count: 0,
            embed_dim: 10,
            hidden_dim: 10,
            cell: CellKind::Vanilla,
            scheme: TimestampScheme::default(),
            flashback: FlashbackConfig::default(),
            use_ste: true,
            use_query_time: true,
            fixed_bandwidth: None,
            multi_granularity: false,
            init_scale: INIT_SCALE,
        }
    }
}

impl ModelConfig {
    pub fn for_corpus(user_count: usize, poi_count: usize) -> Self {
        Self {
            user_count,
            poi_count,
            ..Self::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        variant.apply(&mut self);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.poi_count == 0 {
            return Err(Error::config("model.poi_count", "must be > 0"));
        }
        if self.user_count == 0 {
            return Err(Error::config("model.user_count", "must be > 0"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("model.embed_dim", "must be > 0"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "must be > 0"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("model.init_scale", "must be finite and >= 0"));
        }
        if let Some(b) = self.fixed_bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::config("model.fixed_bandwidth", "must be > 0"));
            }
            if !self.use_ste {
                return Err(Error::config("model.fixed_bandwidth", "requires use_ste = true"));
            }
        }
        if self.multi_granularity && !self.use_ste {
            return Err(Error::config("model.multi_granularity", "requires use_ste = true"));
        }
        self.flashback.validate()
    }

    /// Whether the model owns learnable (or fixed) bandwidths.
    pub fn has_bandwidths(&self) -> bool {
        self.use_ste
    }

    pub fn variant(&self) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.matches(self))
    }
}

/// Named flag combinations for the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Replay,
    NoSte,
    NoQt,
    MultiG,
    FixedB,
    Flashback,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Replay,
        Variant::NoSte,
        Variant::NoQt,
        Variant::MultiG,
        Variant::FixedB,
        Variant::Flashback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Replay => "replay",
            Variant::NoSte => "noste",
            Variant::NoQt => "noqt",
            Variant::MultiG => "multig",
            Variant::FixedB => "fixedb",
            Variant::Flashback => "flashback",
        }
    }

    /// (use_ste, use_query_time, multi_granularity, fixed bandwidth)
    fn flags(self) -> (bool, bool, bool, bool) {
        match self {
            Variant::Replay => (true, true, false, false),
            Variant::NoSte => (false, true, false, false),
            Variant::NoQt => (true, false, false, false),
            Variant::MultiG => (true, true, true, false),
            Variant::FixedB => (true, true, false, true),
            Variant::Flashback => (false, false, false, false),
        }
    }

    pub fn apply(self, cfg: &mut ModelConfig) {
        let (ste, qt, multi, fixed) = self.flags();
        cfg.use_ste = ste;
        cfg.use_query_time = qt;
        cfg.multi_granularity = multi;
        cfg.fixed_bandwidth = if fixed {
            Some(cfg.fixed_bandwidth.unwrap_or(DEFAULT_FIXED_BANDWIDTH))
        } else {
            None
        };
    }

    fn matches(self, cfg: &ModelConfig) -> bool {
        let (ste, qt, multi, fixed) = self.flags();
        cfg.use_ste == ste
            && cfg.use_query_time == qt
            && cfg.multi_granularity == multi
            && cfg.fixed_bandwidth.is_some() == fixed
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        let key = key.strip_prefix("replay").filter(|k| !k.is_empty()).unwrap_or(&key);
        Ok(match key {
            "replay" => Variant::Replay,
            "noste" | "nostep" => Variant::NoSte,
            "noqt" => Variant::NoQt,
            "multig" => Variant::MultiG,
            "fixedb" => Variant::FixedB,
            "flashback" => Variant::Flashback,
            _ => {
                return Err(Error::config(
                    "variant",
                    format!("unknown variant `{s}` (expected replay, noste, noqt, multig, fixedb or flashback)"),
                ))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_lattice() {
        let base = ModelConfig::for_corpus(3, 5);
        let cases = [
            ("replay", true, true),
            ("REPLAY-noSTE", false, true),
            ("replay-noqt", true, false),
            ("flashback", false, false),
        ];
        for (name, ste, qt) in cases {
            let v: Variant = name.parse().unwrap();
            let cfg = base.clone().with_variant(v);
            assert_eq!((cfg.use_ste, cfg.use_query_time), (ste, qt), "{name}");
            assert_eq!(cfg.variant(), Some(v));
            cfg.validate().unwrap();
        }
        let fixed = base.clone().with_variant("REPLAY-FixedB".parse().unwrap());
        assert_eq!(fixed.fixed_bandwidth, Some(DEFAULT_FIXED_BANDWIDTH));
        assert!(fixed.use_ste);
        let multi = base.with_variant(Variant::MultiG);
        assert!(multi.multi_granularity && multi.use_ste && multi.use_query_time);
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn fixed_bandwidth_requires_ste() {
        let cfg = ModelConfig {
            use_ste: false,
            fixed_bandwidth: Some(2.0),
            ..ModelConfig::for_corpus(2, 2)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "model.fixed_bandwidth"));
    }
}
