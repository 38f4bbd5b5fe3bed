//! Epoch loop: one Adam step per user, truncated backpropagation within a user.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::head::mean_user_loss;
use super::SequenceModel;
use crate::data::{SplitCorpus, UserSequence};
use crate::error::{Error, Result};
use crate::numerics::rng::labeled_rng;
use crate::numerics::{adam_step, OptimizerConfig, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    /// Steps per backpropagation segment; `None` backpropagates through the
    /// whole training prefix.
    pub bptt_window: Option<usize>,
    /// Visit users in a seeded random order each epoch.
    pub shuffle: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            bptt_window: Some(20),
            shuffle: true,
        }
    }
}

/// Counters that must survive a checkpoint for a resumed run to match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainProgress {
    pub epochs_completed: u64,
    pub optimizer_step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: u64,
    pub mean_loss: f64,
    pub step_count: usize,
    pub batches: usize,
}

fn segments(steps: usize, window: Option<usize>) -> Vec<std::ops::Range<usize>> {
    let w = window.unwrap_or(steps).max(1);
    (0..steps).step_by(w).map(|s| s..(s + w).min(steps)).collect()
}

/// Forward (and with `scale`, backward) over one user's training prefix.
fn run_user<M: SequenceModel + ?Sized>(
    model: &M,
    params: &mut ParamStore,
    seq: &UserSequence,
    scale: Option<f64>,
    window: Option<usize>,
) -> Result<Vec<f64>> {
    let events = seq.train();
    let steps = events.len().saturating_sub(1);
    let mut state = model.new_state();
    let mut losses = Vec::with_capacity(steps);
    let (values, mut grads) = params.split_mut();
    for (k, range) in segments(steps, window).into_iter().enumerate() {
        let grads = scale.map(|s| (&mut grads, s));
        let out = model.run_segment(&values, grads, &mut state, seq.user, events, range, false)?;
        if out.losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLoss {
                user: seq.user,
                window: k,
            });
        }
        losses.extend(out.losses);
    }
    Ok(losses)
}

pub fn train_epoch<M: SequenceModel + ?Sized>(
    model: &M,
    corpus: &SplitCorpus,
    params: &mut ParamStore,
    optimizer: &OptimizerConfig,
    progress: &mut TrainProgress,
    seed: u64,
    options: &TrainOptions,
) -> Result<EpochStats> {
    optimizer.validate()?;
    if options.bptt_window == Some(0) {
        return Err(Error::config("training.bptt_window", "must be >= 1"));
    }
    let mut order: Vec<usize> = (0..corpus.users.len()).collect();
    if options.shuffle {
        let mut rng = labeled_rng(seed, &format!("epoch/{}", progress.epochs_completed));
        order.shuffle(&mut rng);
    }
    params.zero_grads();
    let mut per_user = Vec::with_capacity(order.len());
    let mut batches = 0;
    for &u in &order {
        let seq = &corpus.users[u];
        let steps = seq.train_len.saturating_sub(1);
        if steps == 0 {
            continue;
        }
        let losses = run_user(model, params, seq, Some(1.0 / steps as f64), options.bptt_window)?;
        adam_step(params, optimizer, progress.optimizer_step + 1)?;
        progress.optimizer_step += 1;
        batches += 1;
        per_user.push(losses);
    }
    progress.epochs_completed += 1;
    Ok(EpochStats {
        epoch: progress.epochs_completed,
        mean_loss: mean_user_loss(&per_user),
        step_count: per_user.iter().map(Vec::len).sum(),
        batches,
    })
}

/// Training loss of the whole corpus with full backpropagation, no update.
pub fn corpus_loss<M: SequenceModel + ?Sized>(model: &M, params: &ParamStore, corpus: &SplitCorpus) -> Result<f64> {
    let mut scratch = params.clone();
    let per_user = corpus
        .users
        .iter()
        .map(|seq| run_user(model, &mut scratch, seq, None, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_user_loss(&per_user))
}

/// Like [`corpus_loss`], also leaving its exact gradient in `params`.
pub fn corpus_loss_and_grad<M: SequenceModel + ?Sized>(
    model: &M,
    params: &mut ParamStore,
    corpus: &SplitCorpus,
) -> Result<f64> {
    params.zero_grads();
    let active = corpus.users.iter().filter(|u| u.train_len >= 2).count();
    let mut per_user = Vec::new();
    for seq in &corpus.users {
        let steps = seq.train_len.saturating_sub(1);
        if steps == 0 {
            continue;
        }
        let scale = 1.0 / (active as f64 * steps as f64);
        per_user.push(run_user(model, params, seq, Some(scale), None)?);
    }
    Ok(mean_user_loss(&per_user))
}
