//! Fixtures shared by the benchmarks.

use replay_core::data::{build_trajectories, generate_synthetic, split_chronological};
use replay_core::{SplitCorpus, SyntheticSpec};

pub fn corpus(user_count: usize, poi_count: usize, days: u32, seed: u64) -> SplitCorpus {
    let spec = SyntheticSpec {
        user_count,
        poi_count,
        days,
        seed,
        ..Default::default()
    };
    let checkins = generate_synthetic(&spec).expect("valid spec");
    split_chronological(&build_trajectories(&checkins).trajectories, 0.8)
}
