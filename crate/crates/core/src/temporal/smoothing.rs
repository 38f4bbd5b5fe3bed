//! Gaussian smoothing of timestamp embeddings with per-slot learnable bandwidths.
//!
//! For a query slot `n` with bandwidth `σ_n`, every slot `l` in the same cycle
//! group gets weight `exp(-dist(l, n)² / (2σ_n²))`, normalized to sum to one;
//! slots in other groups get zero. The smoothed embedding is the weighted
//! average of the timestamp-embedding rows. The Gaussian prefactor cancels under
//! normalization and is never computed.
//!
//! Bandwidths are stored raw and mapped through softplus, so σ stays positive.

use std::collections::HashMap;
use std::rc::Rc;

use super::scheme::{CycleGroup, CycleLayout, TimestampIndex};
use crate::error::Result;
use crate::numerics::matrix::{axpy, dot, sigmoid, softplus, softplus_inverse};
use crate::numerics::{Grads, Init, ParamId, ParamStore, Values};

/// Bandwidth every learnable slot starts from.
pub const INITIAL_BANDWIDTH: f64 = 1.0;

pub fn initial_raw_bandwidth() -> f64 {
    softplus_inverse(INITIAL_BANDWIDTH)
}

/// Per-slot bandwidths: learned through softplus, or pinned to one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthVector {
    pub raw: ParamId,
    pub fixed_value: Option<f64>,
}

impl BandwidthVector {
    /// Register the raw tensor. With a fixed value the tensor is frozen.
    pub fn register(params: &mut ParamStore, name: &str, count: usize, fixed_value: Option<f64>) -> Result<Self> {
        let raw = params.add(name, &[count], Init::Constant(initial_raw_bandwidth()))?;
        if let Some(v) = fixed_value {
            assert!(v > 0.0, "fixed bandwidth must be positive");
            params.set_frozen(raw, true);
        }
        Ok(Self { raw, fixed_value })
    }

    pub fn sigma(&self, raw: &[f64], n: usize) -> f64 {
        match self.fixed_value {
            Some(v) => v,
            None => softplus(raw[n]),
        }
    }

    pub fn sigmas(&self, params: &ParamStore) -> Vec<f64> {
        let raw = params.value(self.raw);
        (0..raw.len()).map(|n| self.sigma(raw, n)).collect()
    }
}

/// Normalized kernel weights of the group containing `n`, indexed from `group.start`.
fn group_weights(n: usize, sigma: f64, layout: &CycleLayout) -> (CycleGroup, Vec<f64>) {
    let group = layout.group_of(n);
    // A collapsed or non-finite bandwidth poisons the row; training reports it
    // as a non-finite loss.
    if !(sigma > 0.0 && sigma.is_finite()) {
        return (group, vec![f64::NAN; group.period]);
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut w: Vec<f64> = group
        .range()
        .map(|l| {
            let d = layout.distance(l, n).expect("same group") as f64;
            (-d * d * inv).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    (group, w)
}

/// Full-length weight row for slot `n` (zeros outside its cycle group).
pub fn smoothing_weights(n: TimestampIndex, sigma: f64, layout: &CycleLayout) -> Vec<f64> {
    let (group, w) = group_weights(n.0, sigma, layout);
    let mut out = vec![0.0; layout.timestamp_count()];
    out[group.range()].copy_from_slice(&w);
    out
}

/// Smoothed embedding of slot `n` from a row-major `[count, dim]` table.
pub fn smooth_embedding(n: TimestampIndex, sigma: f64, table: &[f64], dim: usize, layout: &CycleLayout) -> Vec<f64> {
    debug_assert_eq!(table.len(), layout.timestamp_count() * dim);
    let (group, w) = group_weights(n.0, sigma, layout);
    let mut out = vec![0.0; dim];
    for (k, l) in group.range().enumerate() {
        if w[k] != 0.0 {
            axpy(w[k], &table[l * dim..(l + 1) * dim], &mut out);
        }
    }
    out
}

/// Forward activations for one smoothed slot, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SmoothedRow {
    pub n: usize,
    pub sigma: f64,
    group: CycleGroup,
    weights: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl SmoothedRow {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A timestamp-embedding table together with its bandwidths.
#[derive(Debug, Clone)]
pub struct Smoother {
    pub layout: CycleLayout,
    pub table: ParamId,
    pub bandwidths: BandwidthVector,
    pub dim: usize,
}

impl Smoother {
    pub fn register(
        params: &mut ParamStore,
        prefix: &str,
        layout: CycleLayout,
        dim: usize,
        fixed_bandwidth: Option<f64>,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        let count = layout.timestamp_count();
        let table = params.add(
            &format!("{prefix}.embedding"),
            &[count, dim],
            Init::Uniform {
                seed,
                scale: init_scale,
            },
        )?;
        let bandwidths = BandwidthVector::register(params, &format!("{prefix}.bandwidth"), count, fixed_bandwidth)?;
        Ok(Self {
            layout,
            table,
            bandwidths,
            dim,
        })
    }

    pub fn forward(&self, values: &Values<'_>, n: usize) -> SmoothedRow {
        let sigma = self.bandwidths.sigma(values.get(self.bandwidths.raw), n);
        let (group, weights) = group_weights(n, sigma, &self.layout);
        let table = values.get(self.table);
        let mut embedding = vec![0.0; self.dim];
        for (k, l) in group.range().enumerate() {
            if weights[k] != 0.0 {
                axpy(weights[k], &table[l * self.dim..(l + 1) * self.dim], &mut embedding);
            }
        }
        SmoothedRow {
            n,
            sigma,
            group,
            weights,
            embedding,
        }
    }

    /// Memoized forward; valid while parameter values are unchanged.
    pub fn cached(&self, cache: &mut SmoothingCache, values: &Values<'_>, n: usize) -> Rc<SmoothedRow> {
        cache
            .rows
            .entry(n)
            .or_insert_with(|| Rc::new(self.forward(values, n)))
            .clone()
    }

    /// Accumulate gradients for the table rows and the raw bandwidth of `row.n`.
    pub fn backward(&self, row: &SmoothedRow, upstream: &[f64], values: &Values<'_>, grads: &mut Grads<'_>) {
        let dim = self.dim;
        if let Some(g) = grads.get(self.table) {
            for (k, l) in row.group.range().enumerate() {
                if row.weights[k] != 0.0 {
                    axpy(row.weights[k], upstream, &mut g[l * dim..(l + 1) * dim]);
                }
            }
        }
        if self.bandwidths.fixed_value.is_some() {
            return;
        }
        let Some(gbw) = grads.get(self.bandwidths.raw) else {
            return;
        };
        // dw_l/dσ = w_l (d_l² - Σ_m w_m d_m²) / σ³
        let table = values.get(self.table);
        let mut mean_sq = 0.0;
        let mut weighted = 0.0;
        for (k, l) in row.group.range().enumerate() {
            let w = row.weights[k];
            if w == 0.0 {
                continue;
            }
            let d = self.layout.distance(l, row.n).expect("same group") as f64;
            let a = dot(upstream, &table[l * dim..(l + 1) * dim]);
            mean_sq += w * d * d;
            weighted += w * d * d * a;
        }
        let d_sigma = (weighted - mean_sq * dot(upstream, &row.embedding)) / row.sigma.powi(3);
        let raw = values.get(self.bandwidths.raw)[row.n];
        gbw[row.n] += d_sigma * sigmoid(raw);
    }
}

#[derive(Debug, Default)]
pub struct SmoothingCache {
    rows: HashMap<usize, Rc<SmoothedRow>>,
}

impl SmoothingCache {
    pub fn clear(&mut self) {
        self.rows.clear();
    }
}
