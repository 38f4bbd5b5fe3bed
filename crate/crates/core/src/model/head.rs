//! Affine output layer, softmax cross-entropy and the per-user segment state.

use std::collections::VecDeque;

use crate::error::Result;
use crate::flashback::StepContext;
use crate::numerics::matrix::{axpy, gemv_acc, gemv_t_acc, outer_acc, softmax};
use crate::numerics::{Grads, Init, ParamId, ParamStore, Values};
use crate::recurrent::{CellKind, HiddenState};
use crate::temporal::SmoothingCache;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Head {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub poi_count: usize,
}

impl Head {
    pub fn register(
        params: &mut ParamStore,
        poi_count: usize,
        input_dim: usize,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        let w = params.add(
            "head.w",
            &[poi_count, input_dim],
            Init::Uniform {
                seed,
                scale: init_scale,
            },
        )?;
        let b = params.add("head.b", &[poi_count], Init::Constant(0.0))?;
        Ok(Self {
            w,
            b,
            input_dim,
            poi_count,
        })
    }

    pub fn logits(&self, values: &Values<'_>, z: &[f64]) -> Vec<f64> {
        let mut out = values.get(self.b).to_vec();
        gemv_acc(values.get(self.w), z, &mut out);
        out
    }

    /// Accumulate weight gradients and return the gradient w.r.t. `z`.
    pub fn backward(&self, values: &Values<'_>, grads: &mut Grads<'_>, z: &[f64], dlogits: &[f64]) -> Vec<f64> {
        if let Some(g) = grads.get(self.w) {
            outer_acc(dlogits, z, g);
        }
        if let Some(g) = grads.get(self.b) {
            axpy(1.0, dlogits, g);
        }
        let mut dz = vec![0.0; self.input_dim];
        gemv_t_acc(values.get(self.w), dlogits, &mut dz);
        dz
    }
}

/// Returns `(-log max(p_target, PROB_FLOOR), probabilities)`.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut probs = vec![0.0; logits.len()];
    softmax(logits, &mut probs);
    (-probs[target].max(PROB_FLOOR).ln(), probs)
}

/// Gradient of `scale * cross_entropy` w.r.t. the logits. Zero when the
/// target probability sits on the clamp.
pub fn cross_entropy_grad(probs: &[f64], target: usize, scale: f64) -> Vec<f64> {
    if probs[target] < PROB_FLOOR {
        return vec![0.0; probs.len()];
    }
    let mut g: Vec<f64> = probs.iter().map(|p| p * scale).collect();
    g[target] -= scale;
    g
}

/// Mean over users of each user's mean step loss. Users without steps are skipped.
pub fn mean_user_loss(per_user: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = per_user
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| l.iter().sum::<f64>() / l.len() as f64)
        .collect();
    if means.is_empty() {
        return 0.0;
    }
    means.iter().sum::<f64>() / means.len() as f64
}

/// Recurrent state carried from one segment of a user's sequence to the next.
///
/// Past hidden states are kept as plain values: gradients never flow into an
/// earlier segment.
#[derive(Debug)]
pub struct SegmentState {
    pub hidden: HiddenState,
    pub(crate) history: VecDeque<(Vec<f64>, StepContext)>,
    pub(crate) caches: Vec<SmoothingCache>,
}

impl SegmentState {
    pub fn new(kind: CellKind, hidden_dim: usize, channels: usize) -> Self {
        Self {
            hidden: HiddenState::zeros(kind, hidden_dim),
            history: VecDeque::new(),
            caches: (0..channels).map(|_| SmoothingCache::default()).collect(),
        }
    }

    /// Append this segment's states and keep only what the next window can reach.
    pub(crate) fn remember(&mut self, states: Vec<Vec<f64>>, contexts: &[StepContext], window: usize) {
        let keep = window.saturating_sub(1);
        for (h, ctx) in states.into_iter().zip(contexts) {
            self.history.push_back((h, *ctx));
        }
        while self.history.len() > keep {
            self.history.pop_front();
        }
    }

    pub(crate) fn history_contexts(&self) -> Vec<StepContext> {
        self.history.iter().map(|(_, c)| *c).collect()
    }

    pub(crate) fn history_state(&self, j: usize) -> &[f64] {
        &self.history[j].0
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }
}
