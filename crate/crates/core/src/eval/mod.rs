//! Ranking metrics, evaluation reports and bandwidth analysis.

pub mod bandwidth;
pub mod metrics;
pub mod report;

pub use bandwidth::{
    bandwidth_report, mean_sigma_over_hours, write_bandwidths_csv, BandwidthReport, ChannelBandwidths, HourBandwidth,
};
pub use metrics::{rank_of_truth, RankSummary, ACC_CUTOFFS};
pub use report::{
    evaluate, read_metrics_csv, read_per_timestamp_csv, write_metrics_csv, write_per_period_csv,
    write_per_timestamp_csv, EvalSplit, EvaluationReport, MetricsRow, Period, PeriodMetrics, Prediction, SlotMetrics,
};
