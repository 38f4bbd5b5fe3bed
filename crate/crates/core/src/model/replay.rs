use std::ops::Range;

use super::config::ModelConfig;
use super::head::{cross_entropy, cross_entropy_grad, Head, SegmentState};
use super::time_encoder::{EncodedTime, IntervalEncoder, TimeEncoder};
use super::{check_ids, SegmentOutput, SequenceModel};
use crate::data::Event;
use crate::error::Result;
use crate::flashback::{aggregate_backward, aggregate_states, context_weights, StepContext};
use crate::numerics::matrix::axpy;
use crate::numerics::{Grads, Init, ParamId, ParamStore, Values};
use crate::recurrent::{bptt_backward, Cell, CellCache};

/// The full model with every variant flag honored.
#[derive(Debug, Clone)]
pub struct ReplayModel {
    pub cfg: ModelConfig,
    pub poi_emb: ParamId,
    pub user_emb: ParamId,
    /// Smoothed timestamp tables, present when `use_ste`.
    pub time: Option<TimeEncoder>,
    /// Without smoothed tables the query enters as the time left until it.
    pub interval: Option<IntervalEncoder>,
    pub cell: Cell,
    pub head: Head,
}

struct StepRecord {
    start: usize,
    weights: Vec<f64>,
    z: Vec<f64>,
    probs: Vec<f64>,
    input_time: Option<EncodedTime>,
    query: Option<Query>,
}

enum Query {
    Smoothed(EncodedTime),
    Interval(usize),
}

impl ReplayModel {
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let d = cfg.embed_dim;
        let init = Init::Uniform {
            seed,
            scale: cfg.init_scale,
        };
        let poi_emb = params.add("poi_emb", &[cfg.poi_count, d], init)?;
        let user_emb = params.add("user_emb", &[cfg.user_count, d], init)?;
        let time = if cfg.use_ste {
            Some(TimeEncoder::smoothed(
                &mut params,
                cfg.scheme,
                cfg.multi_granularity,
                d,
                cfg.fixed_bandwidth,
                seed,
                cfg.init_scale,
            )?)
        } else {
            None
        };
        let interval = if !cfg.use_ste && cfg.use_query_time {
            Some(IntervalEncoder::register(&mut params, d, seed, cfg.init_scale)?)
        } else {
            None
        };
        let time_width = time.as_ref().map_or(0, TimeEncoder::width);
        let query_width = match (&time, &interval) {
            _ if !cfg.use_query_time => 0,
            (Some(_), _) => time_width,
            (None, Some(iv)) => iv.dim,
            (None, None) => 0,
        };
        let cell = Cell::register(
            &mut params,
            cfg.cell,
            d + time_width,
            cfg.hidden_dim,
            seed,
            cfg.init_scale,
        )?;
        let head_dim = cfg.hidden_dim + d + query_width;
        let head = Head::register(&mut params, cfg.poi_count, head_dim, seed, cfg.init_scale)?;
        Ok((
            Self {
                cfg,
                poi_emb,
                user_emb,
                time,
                interval,
                cell,
                head,
            },
            params,
        ))
    }
}

impl SequenceModel for ReplayModel {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn time_encoder(&self) -> Option<&TimeEncoder> {
        self.time.as_ref()
    }

    fn new_state(&self) -> SegmentState {
        SegmentState::new(
            self.cfg.cell,
            self.cfg.hidden_dim,
            self.time.as_ref().map_or(0, TimeEncoder::channel_count),
        )
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
        check_ids(&self.cfg, user, events, &steps)?;
        let cfg = &self.cfg;
        let d = cfg.embed_dim;
        let hd = cfg.hidden_dim;
        let training = grads.is_some();
        let hist_len = state.history_len();
        let mut contexts = state.history_contexts();
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(steps.len());
        let mut caches: Vec<CellCache> = Vec::with_capacity(steps.len());
        let mut records: Vec<StepRecord> = Vec::new();
        let mut out = SegmentOutput::default();
        let poi_table = values.get(self.poi_emb);
        let user_row = &values.get(self.user_emb)[user * d..(user + 1) * d];

        for i in steps.clone() {
            let ev = &events[i];
            let next = &events[i + 1];
            let mut x = poi_table[ev.poi * d..(ev.poi + 1) * d].to_vec();
            let input_time = self.time.as_ref().map(|enc| {
                let e = enc.encode(values, &mut state.caches, &ev.local_time);
                x.extend_from_slice(&e.vector);
                e
            });
            let (h, cache) = self.cell.forward(values, &x, &state.hidden);
            state.hidden = h;
            hs.push(state.hidden.h.clone());
            caches.push(cache);
            contexts.push(StepContext {
                time_days: ev.time_days,
                location: ev.location,
            });

            let (start, weights) = context_weights(&contexts, &cfg.flashback);
            let states: Vec<&[f64]> = (start..contexts.len())
                .map(|j| {
                    if j < hist_len {
                        state.history_state(j)
                    } else {
                        hs[j - hist_len].as_slice()
                    }
                })
                .collect();
            let mut z = aggregate_states(&states, &weights);
            z.extend_from_slice(user_row);
            let query = match (&self.time, &self.interval) {
                _ if !cfg.use_query_time => None,
                (Some(enc), _) => {
                    let e = enc.encode(values, &mut state.caches, &next.local_time);
                    z.extend_from_slice(&e.vector);
                    Some(Query::Smoothed(e))
                }
                (None, Some(iv)) => {
                    let bucket = IntervalEncoder::bucket(next.time_days - ev.time_days);
                    z.extend_from_slice(&iv.encode(values, bucket));
                    Some(Query::Interval(bucket))
                }
                (None, None) => None,
            };
            let logits = self.head.logits(values, &z);
            let (loss, probs) = cross_entropy(&logits, next.poi);
            out.losses.push(loss);
            if keep_logits {
                out.logits.push(logits);
            }
            if training {
                records.push(StepRecord {
                    start,
                    weights,
                    z,
                    probs,
                    input_time,
                    query,
                });
            }
        }

        if let Some((grads, scale)) = grads {
            let mut upstream = vec![vec![0.0; hd]; steps.len()];
            for (t, rec) in records.iter().enumerate() {
                let target = events[steps.start + t + 1].poi;
                let dlogits = cross_entropy_grad(&rec.probs, target, scale);
                let dz = self.head.backward(values, grads, &rec.z, &dlogits);
                if let Some(g) = grads.get(self.user_emb) {
                    axpy(1.0, &dz[hd..hd + d], &mut g[user * d..(user + 1) * d]);
                }
                match (&rec.query, &self.time, &self.interval) {
                    (Some(Query::Smoothed(q)), Some(enc), _) => enc.backward(q, &dz[hd + d..], values, grads),
                    (Some(Query::Interval(b)), _, Some(iv)) => iv.backward(*b, &dz[hd + d..], grads),
                    _ => {}
                }
                for (k, g) in aggregate_backward(&rec.weights, &dz[..hd]) {
                    let j = rec.start + k;
                    if j >= hist_len {
                        axpy(1.0, &g, &mut upstream[j - hist_len]);
                    }
                }
            }
            let (dxs, _) = bptt_backward(&self.cell, &caches, &upstream, values, grads)?;
            for (t, dx) in dxs.iter().enumerate() {
                let poi = events[steps.start + t].poi;
                if let Some(g) = grads.get(self.poi_emb) {
                    axpy(1.0, &dx[..d], &mut g[poi * d..(poi + 1) * d]);
                }
                if let (Some(enc), Some(e)) = (&self.time, &records[t].input_time) {
                    enc.backward(e, &dx[d..], values, grads);
                }
            }
        }

        state.remember(hs, &contexts[hist_len..], cfg.flashback.window);
        Ok(out)
    }
}
