//! Check-in ingestion, chronological splitting, synthetic corpora and corpus analyses.

pub mod analysis;
pub mod checkin;
pub mod corpus;
pub mod synthetic;

pub use analysis::{corpus_stats, returning_probability, CorpusStats, ReturningHistogram, ReturningOptions};
pub use checkin::{
    ingest, ingest_reader, save_checkins, write_checkins, CheckIn, IngestOptions, IngestReport, Ingested,
};
pub use corpus::{
    build_trajectories, split_chronological, split_with_minimum, Event, SplitCorpus, Trajectory, TrajectorySet,
    UserSequence, Vocab, DEFAULT_TRAIN_FRACTION, MIN_CHECKINS_PER_USER,
};
pub use synthetic::{
    day_night_profile, generate_synthetic, generate_with_truth, is_daytime, SyntheticCorpus, SyntheticSpec,
};
