//! The plain spatiotemporal-flashback recurrent model: no timestamp features.

use std::ops::Range;

use super::config::ModelConfig;
use super::head::{cross_entropy, cross_entropy_grad, Head, SegmentState};
use super::time_encoder::TimeEncoder;
use super::{check_ids, SegmentOutput, SequenceModel};
use crate::data::Event;
use crate::error::{Error, Result};
use crate::flashback::{aggregate_backward, aggregate_states, context_weights, StepContext};
use crate::numerics::matrix::axpy;
use crate::numerics::{Grads, Init, ParamId, ParamStore, Values};
use crate::recurrent::{bptt_backward, Cell};

#[derive(Debug, Clone)]
pub struct FlashbackModel {
    pub cfg: ModelConfig,
    pub poi_emb: ParamId,
    pub user_emb: ParamId,
    pub cell: Cell,
    pub head: Head,
}

/// What the backward pass needs from one prediction step.
struct Tap {
    start: usize,
    weights: Vec<f64>,
    z: Vec<f64>,
    probs: Vec<f64>,
}

impl FlashbackModel {
    /// Parameter names and initial values coincide with [`super::ReplayModel`]
    /// built from the same config and seed.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        if cfg.use_ste || cfg.use_query_time {
            return Err(Error::config(
                "variant",
                "the flashback model takes no timestamp features",
            ));
        }
        let mut params = ParamStore::new();
        let d = cfg.embed_dim;
        let init = Init::Uniform {
            seed,
            scale: cfg.init_scale,
        };
        let poi_emb = params.add("poi_emb", &[cfg.poi_count, d], init)?;
        let user_emb = params.add("user_emb", &[cfg.user_count, d], init)?;
        let cell = Cell::register(&mut params, cfg.cell, d, cfg.hidden_dim, seed, cfg.init_scale)?;
        let head = Head::register(&mut params, cfg.poi_count, cfg.hidden_dim + d, seed, cfg.init_scale)?;
        Ok((
            Self {
                cfg,
                poi_emb,
                user_emb,
                cell,
                head,
            },
            params,
        ))
    }
}

impl SequenceModel for FlashbackModel {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn time_encoder(&self) -> Option<&TimeEncoder> {
        None
    }

    fn new_state(&self) -> SegmentState {
        SegmentState::new(self.cfg.cell, self.cfg.hidden_dim, 0)
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
        let d = self.cfg.embed_dim;
        let hd = self.cfg.hidden_dim;
        let hist_len = state.history_len();
        let mut contexts = state.history_contexts();
        let mut hs = Vec::with_capacity(steps.len());
        let mut caches = Vec::with_capacity(steps.len());
        let mut taps: Vec<Tap> = Vec::new();
        let mut out = SegmentOutput::default();
        let poi_table = values.get(self.poi_emb);
        let user_row = &values.get(self.user_emb)[user * d..(user + 1) * d];

        for i in steps.clone() {
            let poi = events[i].poi;
            let (h, cache) = self
                .cell
                .forward(values, &poi_table[poi * d..(poi + 1) * d], &state.hidden);
            state.hidden = h;
            hs.push(state.hidden.h.clone());
            caches.push(cache);
            contexts.push(StepContext {
                time_days: events[i].time_days,
                location: events[i].location,
            });
            let (start, weights) = context_weights(&contexts, &self.cfg.flashback);
            let mut tapped: Vec<&[f64]> = Vec::with_capacity(weights.len());
            for j in start..contexts.len() {
                tapped.push(if j < hist_len {
                    state.history_state(j)
                } else {
                    &hs[j - hist_len]
                });
            }
            let mut z = aggregate_states(&tapped, &weights);
            z.extend_from_slice(user_row);
            let logits = self.head.logits(values, &z);
            let (loss, probs) = cross_entropy(&logits, events[i + 1].poi);
            out.losses.push(loss);
            if keep_logits {
                out.logits.push(logits);
            }
            if grads.is_some() {
                taps.push(Tap {
                    start,
                    weights,
                    z,
                    probs,
                });
            }
        }

        if let Some((grads, scale)) = grads {
            let mut upstream = vec![vec![0.0; hd]; steps.len()];
            for (
                t,
                Tap {
                    start,
                    weights,
                    z,
                    probs,
                },
            ) in taps.iter().enumerate()
            {
                let dlogits = cross_entropy_grad(probs, events[steps.start + t + 1].poi, scale);
                let dz = self.head.backward(values, grads, z, &dlogits);
                if let Some(g) = grads.get(self.user_emb) {
                    axpy(1.0, &dz[hd..], &mut g[user * d..(user + 1) * d]);
                }
                for (k, g) in aggregate_backward(weights, &dz[..hd]) {
                    if start + k >= hist_len {
                        axpy(1.0, &g, &mut upstream[start + k - hist_len]);
                    }
                }
            }
            let (dxs, _) = bptt_backward(&self.cell, &caches, &upstream, values, grads)?;
            if let Some(g) = grads.get(self.poi_emb) {
                for (t, dx) in dxs.iter().enumerate() {
                    let poi = events[steps.start + t].poi;
                    axpy(1.0, dx, &mut g[poi * d..(poi + 1) * d]);
                }
            }
        }

        state.remember(hs, &contexts[hist_len..], self.cfg.flashback.window);
        Ok(out)
    }
}
