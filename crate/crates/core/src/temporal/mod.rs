//! Cyclical timestamps and Gaussian-smoothed timestamp embeddings.

pub mod scheme;
pub mod smoothing;

pub use scheme::{
    cyclical_distance, day_of_week_index, transform_timestamp, CycleGroup, CycleLayout, Granularity, TimeScale,
    TimestampIndex, TimestampScheme,
};
pub use smoothing::{
    smooth_embedding, smoothing_weights, BandwidthVector, SmoothedRow, Smoother, SmoothingCache, INITIAL_BANDWIDTH,
};
