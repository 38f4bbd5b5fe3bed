//! Per-user trajectories, id vocabularies and the chronological split.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::NaiveDateTime;

use super::checkin::CheckIn;
use crate::flashback::GeoPoint;

/// Users with fewer check-ins than this are dropped by the split.
pub const MIN_CHECKINS_PER_USER: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub user_id: String,
    /// Strictly increasing in `utc_time`.
    pub checkins: Vec<CheckIn>,
}

impl Trajectory {
    pub fn is_usable(&self) -> bool {
        self.checkins.len() >= 2
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
    /// Rows sharing (user, utc_time) with an earlier row.
    pub duplicates_dropped: usize,
}

/// Order ids numerically when both are integers, lexically otherwise.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Group check-ins by user, sort by time and drop duplicate timestamps
/// (the first row in input order wins).
pub fn build_trajectories(checkins: &[CheckIn]) -> TrajectorySet {
    let mut by_user: BTreeMap<&str, Vec<&CheckIn>> = BTreeMap::new();
    for c in checkins {
        by_user.entry(c.user_id.as_str()).or_default().push(c);
    }
    let mut users: Vec<_> = by_user.into_iter().collect();
    users.sort_by(|a, b| compare_ids(a.0, b.0));
    let mut set = TrajectorySet::default();
    for (user, mut rows) in users {
        // Stable sort keeps input order among equal timestamps.
        rows.sort_by_key(|c| c.utc_time);
        let before = rows.len();
        rows.dedup_by_key(|c| c.utc_time);
        set.duplicates_dropped += before - rows.len();
        set.trajectories.push(Trajectory {
            user_id: user.to_string(),
            checkins: rows.into_iter().cloned().collect(),
        });
    }
    set
}

/// Dense id mapping shared by the train and test halves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    pub users: Vec<String>,
    pub pois: Vec<String>,
}

impl Vocab {
    pub fn poi_index(&self, id: &str) -> Option<usize> {
        self.pois.iter().position(|p| p == id)
    }
}

/// A check-in reduced to what the model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub poi: usize,
    /// UTC time in fractional days since the Unix epoch.
    pub time_days: f64,
    pub local_time: NaiveDateTime,
    pub location: GeoPoint,
}

impl Event {
    pub fn from_checkin(c: &CheckIn, poi: usize) -> Self {
        Self {
            poi,
            time_days: c.utc_time.timestamp_millis() as f64 / 86_400_000.0,
            local_time: c.local_time,
            location: c.location(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSequence {
    pub user: usize,
    pub events: Vec<Event>,
    /// `events[..train_len]` is the training prefix, the rest is test.
    pub train_len: usize,
}

impl UserSequence {
    pub fn train(&self) -> &[Event] {
        &self.events[..self.train_len]
    }

    pub fn test(&self) -> &[Event] {
        &self.events[self.train_len..]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitCorpus {
    pub vocab: Vocab,
    pub users: Vec<UserSequence>,
    /// Raw ids of users dropped for having too few check-ins.
    pub dropped_users: Vec<String>,
}

impl SplitCorpus {
    pub fn user_count(&self) -> usize {
        self.vocab.users.len()
    }

    pub fn poi_count(&self) -> usize {
        self.vocab.pois.len()
    }

    pub fn train_event_count(&self) -> usize {
        self.users.iter().map(|u| u.train_len).sum()
    }

    pub fn test_event_count(&self) -> usize {
        self.users.iter().map(|u| u.events.len() - u.train_len).sum()
    }

    /// A corpus whose every event is training data.
    pub fn from_events(user_count: usize, poi_count: usize, sequences: Vec<Vec<Event>>) -> Self {
        let users = sequences
            .into_iter()
            .enumerate()
            .map(|(user, events)| UserSequence {
                user,
                train_len: events.len(),
                events,
            })
            .collect();
        Self {
            vocab: Vocab {
                users: (0..user_count).map(|u| u.to_string()).collect(),
                pois: (0..poi_count).map(|p| p.to_string()).collect(),
            },
            users,
            dropped_users: Vec::new(),
        }
    }
}

/// Number of training check-ins for a trajectory of length `n`.
pub fn train_length(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64).ceil() as usize).min(n)
}

/// Per-user chronological prefix/suffix split.
pub fn split_chronological(trajectories: &[Trajectory], train_fraction: f64) -> SplitCorpus {
    split_with_minimum(trajectories, train_fraction, MIN_CHECKINS_PER_USER)
}

pub fn split_with_minimum(trajectories: &[Trajectory], train_fraction: f64, min_checkins: usize) -> SplitCorpus {
    assert!((0.0..=1.0).contains(&train_fraction));
    let mut corpus = SplitCorpus::default();
    let (kept, dropped): (Vec<_>, Vec<_>) = trajectories
        .iter()
        .partition(|t| t.checkins.len() >= min_checkins.max(1));
    corpus.dropped_users = dropped.iter().map(|t| t.user_id.clone()).collect();

    let mut pois: Vec<&str> = kept
        .iter()
        .flat_map(|t| t.checkins.iter().map(|c| c.poi_id.as_str()))
        .collect();
    pois.sort_by(|a, b| compare_ids(a, b));
    pois.dedup();
    let poi_index: BTreeMap<&str, usize> = pois.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    corpus.vocab.pois = pois.iter().map(|p| p.to_string()).collect();

    for (user, t) in kept.iter().enumerate() {
        corpus.vocab.users.push(t.user_id.clone());
        let events = t
            .checkins
            .iter()
            .map(|c| Event::from_checkin(c, poi_index[c.poi_id.as_str()]))
            .collect();
        corpus.users.push(UserSequence {
            user,
            events,
            train_len: train_length(t.checkins.len(), train_fraction),
        });
    }
    if !corpus.dropped_users.is_empty() {
        log::info!(
            "dropped {} users with fewer than {min_checkins} check-ins",
            corpus.dropped_users.len()
        );
    }
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Duration};
    use proptest::prelude::*;

    fn trajectory(user: &str, n: usize) -> Trajectory {
        let t0 = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
        Trajectory {
            user_id: user.into(),
            checkins: (0..n)
                .map(|i| {
                    CheckIn::new(
                        user,
                        format!("p{}", i % 3),
                        t0 + Duration::hours(i as i64 * 5),
                        1.0,
                        2.0,
                        Some(0),
                    )
                    .unwrap()
                })
                .collect(),
        }
    }

    #[test]
    fn split_sizes() {
        let corpus = split_chronological(&[trajectory("a", 10), trajectory("b", 5), trajectory("c", 4)], 0.8);
        assert_eq!(corpus.users.len(), 2);
        assert_eq!((corpus.users[0].train().len(), corpus.users[0].test().len()), (8, 2));
        assert_eq!((corpus.users[1].train().len(), corpus.users[1].test().len()), (4, 1));
        assert_eq!(corpus.dropped_users, vec!["c".to_string()]);
        assert_eq!(corpus.vocab.pois, vec!["p0", "p1", "p2"]);
    }

    #[test]
    fn duplicates_keep_first() {
        let t0 = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
        let rows = vec![
            CheckIn::new("u", "later", t0 + Duration::hours(1), 0.0, 0.0, None).unwrap(),
            CheckIn::new("u", "first", t0, 0.0, 0.0, None).unwrap(),
            CheckIn::new("u", "dup", t0, 0.0, 0.0, None).unwrap(),
        ];
        let set = build_trajectories(&rows);
        assert_eq!(set.duplicates_dropped, 1);
        let ids: Vec<_> = set.trajectories[0].checkins.iter().map(|c| c.poi_id.as_str()).collect();
        assert_eq!(ids, vec!["first", "later"]);
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let mut ids = vec!["10", "9", "abc", "2"];
        ids.sort_by(|a, b| compare_ids(a, b));
        assert_eq!(ids, vec!["2", "9", "10", "abc"]);
    }

    proptest! {
        #[test]
        fn split_preserves_checkins(lengths in prop::collection::vec(0usize..30, 1..8), frac in 0.1f64..0.95) {
            let trajs: Vec<_> = lengths.iter().enumerate().map(|(u, n)| trajectory(&u.to_string(), *n)).collect();
            let corpus = split_chronological(&trajs, frac);
            let kept: Vec<_> = trajs.iter().filter(|t| t.checkins.len() >= MIN_CHECKINS_PER_USER).collect();
            prop_assert_eq!(corpus.users.len(), kept.len());
            for (seq, t) in corpus.users.iter().zip(kept) {
                prop_assert_eq!(seq.events.len(), t.checkins.len());
                prop_assert_eq!(seq.train_len, (frac * t.checkins.len() as f64).ceil() as usize);
                for (e, c) in seq.events.iter().zip(&t.checkins) {
                    prop_assert_eq!(&corpus.vocab.pois[e.poi], &c.poi_id);
                    prop_assert_eq!(e.local_time, c.local_time);
                }
            }
        }
    }
}
