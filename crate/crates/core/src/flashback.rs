//! Spatiotemporal re-weighting of past hidden states.
//!
//! A past state `j` seen from step `i` gets weight
//! `hvc(2π ΔT) · exp(-α ΔT) · exp(-β ΔD)` with `hvc(x) = (1 + cos x) / 2`,
//! `ΔT` in days and `ΔD` in kilometers. The context is the normalized weighted
//! average of the most recent `window` states, the current one included.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::axpy;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlashbackConfig {
    /// Temporal decay per day.
    pub alpha: f64,
    /// Spatial decay per kilometer.
    pub beta: f64,
    /// Number of most recent states aggregated, the current one included.
    pub window: usize,
}

impl Default for FlashbackConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 100.0,
            window: 20,
        }
    }
}

impl FlashbackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("flashback.alpha", "must be finite and >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("flashback.beta", "must be finite and >= 0"));
        }
        if self.window == 0 {
            return Err(Error::config("flashback.window", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextDelta {
    pub delta_t_days: f64,
    pub delta_d_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Input(format!("coordinate ({lat}, {lon}) out of range")));
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in kilometers.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Checked variant taking raw degrees.
pub fn haversine_km_checked(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    Ok(haversine_km(GeoPoint::new(a.0, a.1)?, GeoPoint::new(b.0, b.1)?))
}

pub fn havercosine(x: f64) -> f64 {
    (1.0 + x.cos()) / 2.0
}

pub fn flashback_weight(delta: ContextDelta, cfg: &FlashbackConfig) -> f64 {
    let w = havercosine(2.0 * std::f64::consts::PI * delta.delta_t_days)
        * (-cfg.alpha * delta.delta_t_days).exp()
        * (-cfg.beta * delta.delta_d_km).exp();
    w.clamp(0.0, 1.0)
}

/// A past step as seen by the aggregator.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    /// Check-in time in fractional days since an arbitrary epoch.
    pub time_days: f64,
    pub location: GeoPoint,
}

/// Weights of the last `min(window, history.len())` entries of `history`
/// relative to its last entry, oldest first. Returns the index of the first
/// state used together with the weights.
pub fn context_weights(history: &[StepContext], cfg: &FlashbackConfig) -> (usize, Vec<f64>) {
    let current = *history.last().expect("at least the current step");
    let start = history.len().saturating_sub(cfg.window);
    let weights = history[start..]
        .iter()
        .map(|past| {
            flashback_weight(
                ContextDelta {
                    delta_t_days: (current.time_days - past.time_days).max(0.0),
                    delta_d_km: haversine_km(current.location, past.location),
                },
                cfg,
            )
        })
        .collect();
    (start, weights)
}

/// `Σ w_j h_j / Σ w_j` over the supplied states.
pub fn aggregate_states(states: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    assert_eq!(states.len(), weights.len());
    assert!(!states.is_empty(), "aggregation needs at least one state");
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; states[0].len()];
    for (h, w) in states.iter().zip(weights) {
        if *w != 0.0 {
            axpy(w / total, h, &mut out);
        }
    }
    out
}

/// Backward of [`aggregate_states`]: the gradient reaching each state is its
/// normalized weight times the upstream gradient. Weights do not depend on
/// learnable parameters.
pub fn aggregate_backward<'a>(weights: &'a [f64], upstream: &[f64]) -> impl Iterator<Item = (usize, Vec<f64>)> + 'a {
    let total: f64 = weights.iter().sum();
    let upstream = upstream.to_vec();
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(move |(j, w)| {
            let scale = w / total;
            (j, upstream.iter().map(|g| g * scale).collect())
        })
}
