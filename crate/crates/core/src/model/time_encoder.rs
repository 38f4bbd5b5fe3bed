//! Timestamp features fed to the recurrence and the prediction head.

use std::rc::Rc;

use chrono::NaiveDateTime;

use crate::error::Result;
use crate::numerics::matrix::axpy;
use crate::numerics::{Grads, Init, ParamId, ParamStore, Values};
use crate::temporal::{
    day_of_week_index, CycleLayout, Granularity, SmoothedRow, Smoother, SmoothingCache, TimeScale, TimestampScheme,
};

/// How a local time is mapped to a slot of one table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotMap {
    Scheme(TimestampScheme),
    DayOfWeek,
}

impl SlotMap {
    pub fn slot(&self, local: &NaiveDateTime) -> usize {
        match self {
            SlotMap::Scheme(s) => s.transform(local).0,
            SlotMap::DayOfWeek => day_of_week_index(local).0,
        }
    }

    fn layout(&self) -> CycleLayout {
        match self {
            SlotMap::Scheme(s) => s.layout(),
            SlotMap::DayOfWeek => CycleLayout::single(7),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoothedChannel {
    pub name: String,
    pub map: SlotMap,
    pub smoother: Smoother,
}

/// One or more smoothed timestamp tables whose outputs are concatenated.
#[derive(Debug, Clone)]
pub struct TimeEncoder {
    channels: Vec<SmoothedChannel>,
}

/// A time feature vector plus what its backward pass needs.
#[derive(Debug, Clone)]
pub struct EncodedTime {
    rows: Vec<Rc<SmoothedRow>>,
    pub vector: Vec<f64>,
}

impl TimeEncoder {
    /// Smoothed tables named `time.*`, or `time_day.*` and `time_dow.*` for
    /// the two-table layout.
    pub fn smoothed(
        params: &mut ParamStore,
        scheme: TimestampScheme,
        multi_granularity: bool,
        dim: usize,
        fixed_bandwidth: Option<f64>,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        let maps = if multi_granularity {
            vec![
                (
                    "time_day",
                    SlotMap::Scheme(TimestampScheme::new(TimeScale::Day, Granularity::Hour)),
                ),
                ("time_dow", SlotMap::DayOfWeek),
            ]
        } else {
            vec![("time", SlotMap::Scheme(scheme))]
        };
        let mut channels = Vec::new();
        for (name, map) in maps {
            let smoother = Smoother::register(params, name, map.layout(), dim, fixed_bandwidth, seed, init_scale)?;
            channels.push(SmoothedChannel {
                name: name.to_string(),
                map,
                smoother,
            });
        }
        Ok(TimeEncoder { channels })
    }

    pub fn width(&self) -> usize {
        self.channels.iter().map(|c| c.smoother.dim).sum()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[SmoothedChannel] {
        &self.channels
    }

    /// `caches` holds one memo per channel and must match the current values.
    pub fn encode(&self, values: &Values<'_>, caches: &mut [SmoothingCache], local: &NaiveDateTime) -> EncodedTime {
        let mut vector = Vec::with_capacity(self.width());
        let mut rows = Vec::with_capacity(self.channels.len());
        for (ch, cache) in self.channels.iter().zip(caches.iter_mut()) {
            let row = ch.smoother.cached(cache, values, ch.map.slot(local));
            vector.extend_from_slice(&row.embedding);
            rows.push(row);
        }
        EncodedTime { rows, vector }
    }

    pub fn backward(&self, enc: &EncodedTime, upstream: &[f64], values: &Values<'_>, grads: &mut Grads<'_>) {
        debug_assert_eq!(upstream.len(), self.width());
        let mut offset = 0;
        for (ch, row) in self.channels.iter().zip(&enc.rows) {
            let d = ch.smoother.dim;
            ch.smoother.backward(row, &upstream[offset..offset + d], values, grads);
            offset += d;
        }
    }
}

/// Number of hourly buckets of the query-interval table; the last one also
/// takes every longer gap.
pub const INTERVAL_BUCKETS: usize = 168;

/// Embedding of the time left until the query, in whole hours.
#[derive(Debug, Clone)]
pub struct IntervalEncoder {
    pub table: ParamId,
    pub dim: usize,
}

impl IntervalEncoder {
    pub fn register(params: &mut ParamStore, dim: usize, seed: u64, init_scale: f64) -> Result<Self> {
        let table = params.add(
            "interval.embedding",
            &[INTERVAL_BUCKETS, dim],
            Init::Uniform {
                seed,
                scale: init_scale,
            },
        )?;
        Ok(Self { table, dim })
    }

    pub fn bucket(delta_days: f64) -> usize {
        let hours = (delta_days * 24.0).max(0.0).floor();
        (hours as usize).min(INTERVAL_BUCKETS - 1)
    }

    pub fn encode(&self, values: &Values<'_>, bucket: usize) -> Vec<f64> {
        values.get(self.table)[bucket * self.dim..(bucket + 1) * self.dim].to_vec()
    }

    pub fn backward(&self, bucket: usize, upstream: &[f64], grads: &mut Grads<'_>) {
        if let Some(g) = grads.get(self.table) {
            axpy(1.0, upstream, &mut g[bucket * self.dim..(bucket + 1) * self.dim]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_buckets() {
        assert_eq!(IntervalEncoder::bucket(0.0), 0);
        assert_eq!(IntervalEncoder::bucket(1.0 / 24.0 - 1e-9), 0);
        assert_eq!(IntervalEncoder::bucket(0.5), 12);
        assert_eq!(IntervalEncoder::bucket(30.0), INTERVAL_BUCKETS - 1);
    }
}
