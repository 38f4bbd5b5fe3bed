//! The REPLAY model, its ablation variants and the training loop.

pub mod config;
pub mod flashback_path;
pub mod head;
pub mod replay;
pub mod time_encoder;
pub mod train;

use std::ops::Range;

use chrono::NaiveDateTime;

pub use config::{ModelConfig, Variant, DEFAULT_FIXED_BANDWIDTH};
pub use flashback_path::FlashbackModel;
pub use head::{cross_entropy, mean_user_loss, SegmentState, PROB_FLOOR};
pub use replay::ReplayModel;
pub use time_encoder::{IntervalEncoder, SlotMap, TimeEncoder, INTERVAL_BUCKETS};
pub use train::{corpus_loss, corpus_loss_and_grad, train_epoch, EpochStats, TrainOptions, TrainProgress};

use crate::data::Event;
use crate::error::{Error, Result};
use crate::numerics::matrix::softmax;
use crate::numerics::{Grads, ParamStore, Values};

#[derive(Debug, Clone, Default)]
pub struct SegmentOutput {
    /// Cross-entropy of each step, in step order.
    pub losses: Vec<f64>,
    /// Raw scores of each step when requested.
    pub logits: Vec<Vec<f64>>,
}

/// A next-POI model that consumes a user's events segment by segment.
pub trait SequenceModel: Send + Sync {
    fn config(&self) -> &ModelConfig;

    fn time_encoder(&self) -> Option<&TimeEncoder>;

    fn new_state(&self) -> SegmentState;

    /// Run steps `steps` of `events`: step `i` reads `events[i]` and predicts
    /// `events[i + 1]`. With `grads`, backpropagates `scale` times the summed
    /// step losses through this segment only.
    #[allow(clippy::too_many_arguments)]
    fn run_segment(
        &self,
        values: &Values<'_>,
        grads: Option<(&mut Grads<'_>, f64)>,
        state: &mut SegmentState,
        user: usize,
        events: &[Event],
        steps: Range<usize>,
        keep_logits: bool,
    ) -> Result<SegmentOutput>;
}

pub(crate) fn check_ids(cfg: &ModelConfig, user: usize, events: &[Event], steps: &Range<usize>) -> Result<()> {
    if user >= cfg.user_count {
        return Err(Error::Input(format!(
            "user {user} out of range (user_count {})",
            cfg.user_count
        )));
    }
    if steps.is_empty() {
        return Ok(());
    }
    if steps.end >= events.len() {
        return Err(Error::Input(format!(
            "steps {steps:?} need a following event ({} events)",
            events.len()
        )));
    }
    if let Some(e) = events[steps.start..=steps.end].iter().find(|e| e.poi >= cfg.poi_count) {
        return Err(Error::Input(format!(
            "poi {} out of range (poi_count {})",
            e.poi, cfg.poi_count
        )));
    }
    Ok(())
}

/// Either model implementation behind one type.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Replay(ReplayModel),
    Flashback(FlashbackModel),
}

impl AnyModel {
    /// Without any timestamp features the dedicated flashback path is used.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        if !cfg.use_ste && !cfg.use_query_time {
            let (m, p) = FlashbackModel::build(cfg, seed)?;
            Ok((AnyModel::Flashback(m), p))
        } else {
            let (m, p) = ReplayModel::build(cfg, seed)?;
            Ok((AnyModel::Replay(m), p))
        }
    }

    fn inner(&self) -> &dyn SequenceModel {
        match self {
            AnyModel::Replay(m) => m,
            AnyModel::Flashback(m) => m,
        }
    }
}

impl SequenceModel for AnyModel {
    fn config(&self) -> &ModelConfig {
        self.inner().config()
    }

    fn time_encoder(&self) -> Option<&TimeEncoder> {
        self.inner().time_encoder()
    }

    fn new_state(&self) -> SegmentState {
        self.inner().new_state()
    }

    fn run_segment(
        &self,
        values: &Values<'_>,
        grads: Option<(&mut Grads<'_>, f64)>,
        state: &mut SegmentState,
        user: usize,
        events: &[Event],
        steps: Range<usize>,
        keep_logits: bool,
    ) -> Result<SegmentOutput> {
        self.inner()
            .run_segment(values, grads, state, user, events, steps, keep_logits)
    }
}

/// Scores for the next POI of `user` after `history`, queried at `query_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionScores {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl PredictionScores {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let mut probabilities = vec![0.0; logits.len()];
        softmax(&logits, &mut probabilities);
        Self { logits, probabilities }
    }
}

/// Run the whole `history` through the model and score the step after it.
pub fn predict_next<M: SequenceModel + ?Sized>(
    model: &M,
    params: &ParamStore,
    user: usize,
    history: &[Event],
    query_time: NaiveDateTime,
) -> Result<PredictionScores> {
    let last = history
        .last()
        .ok_or_else(|| Error::Input("prediction needs at least one past check-in".into()))?;
    let mut events = history.to_vec();
    let ahead = (query_time - last.local_time).num_milliseconds() as f64 / 86_400_000.0;
    events.push(Event {
        poi: 0,
        time_days: last.time_days + ahead,
        local_time: query_time,
        location: last.location,
    });
    let values = params.values();
    let mut state = model.new_state();
    let mut out = model.run_segment(&values, None, &mut state, user, &events, 0..history.len(), true)?;
    Ok(PredictionScores::from_logits(
        out.logits.pop().expect("one step per event"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flashback::GeoPoint;
    use chrono::{Duration, NaiveDate};

    pub(crate) fn toy_events(pois: &[usize]) -> Vec<Event> {
        let t0 = NaiveDate::from_ymd_opt(2023, 11, 6)
            .unwrap()
            .and_hms_opt(8, 0, 0)
            .unwrap();
        pois.iter()
            .enumerate()
            .map(|(i, &poi)| {
                let local = t0 + Duration::hours(5 * i as i64);
                Event {
                    poi,
                    time_days: 19_667.0 + 5.0 * i as f64 / 24.0,
                    local_time: local,
                    location: GeoPoint {
                        lat: 40.0 + 0.01 * poi as f64,
                        lon: -74.0,
                    },
                }
            })
            .collect()
    }

    #[test]
    fn zero_head_predicts_uniformly() {
        let cfg = ModelConfig::for_corpus(1, 3);
        let (model, mut params) = ReplayModel::build(cfg, 1).unwrap();
        params.get_mut(model.head.w).value.fill(0.0);
        let events = toy_events(&[0, 1, 2]);
        let scores = predict_next(&model, &params, 0, &events, events[2].local_time).unwrap();
        for p in &scores.probabilities {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_ids_are_input_errors() {
        let (model, params) = ReplayModel::build(ModelConfig::for_corpus(2, 3), 1).unwrap();
        let events = toy_events(&[0, 1, 2]);
        let q = events[0].local_time;
        assert!(matches!(
            predict_next(&model, &params, 5, &events, q),
            Err(Error::Input(_))
        ));
        let bad = toy_events(&[0, 7]);
        assert!(matches!(
            predict_next(&model, &params, 0, &bad, q),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn reduced_variant_matches_dedicated_path_on_same_weights() {
        let cfg = ModelConfig::for_corpus(2, 6).with_variant(Variant::Flashback);
        let (replay, p1) = ReplayModel::build(cfg.clone(), 9).unwrap();
        let (plain, p2) = FlashbackModel::build(cfg, 9).unwrap();
        assert_eq!(p1, p2);
        let events = toy_events(&[0, 3, 1, 5, 2, 4, 0]);
        let a = predict_next(&replay, &p1, 1, &events, events[6].local_time).unwrap();
        let b = predict_next(&plain, &p2, 1, &events, events[6].local_time).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn relabeling_pois_permutes_probabilities() {
        let cfg = ModelConfig::for_corpus(1, 4);
        let (model, params) = ReplayModel::build(cfg, 3).unwrap();
        let perm = [2usize, 0, 3, 1];
        let d = model.cfg.embed_dim;
        let mut permuted = params.clone();
        {
            let src = params.value(model.poi_emb).to_vec();
            let dst = &mut permuted.get_mut(model.poi_emb).value;
            for (old, &new) in perm.iter().enumerate() {
                dst[new * d..(new + 1) * d].copy_from_slice(&src[old * d..(old + 1) * d]);
            }
            let w = params.value(model.head.w).to_vec();
            let cols = model.head.input_dim;
            let dst = &mut permuted.get_mut(model.head.w).value;
            for (old, &new) in perm.iter().enumerate() {
                dst[new * cols..(new + 1) * cols].copy_from_slice(&w[old * cols..(old + 1) * cols]);
            }
        }
        let events = toy_events(&[0, 1, 3, 2]);
        let mapped: Vec<Event> = events
            .iter()
            .map(|e| Event {
                poi: perm[e.poi],
                ..e.clone()
            })
            .collect();
        let a = predict_next(&model, &params, 0, &events, events[3].local_time).unwrap();
        let b = predict_next(&model, &permuted, 0, &mapped, events[3].local_time).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            assert!((a.probabilities[old] - b.probabilities[new]).abs() < 1e-14);
        }
    }
}
