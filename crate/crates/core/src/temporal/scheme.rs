//! Cyclical timestamp spaces and the local-time → slot transform.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    Day,
    WeekdayWeekend,
    Week,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Hour,
    Minute,
}

impl FromStr for TimeScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "day" => Ok(TimeScale::Day),
            "weekday_weekend" => Ok(TimeScale::WeekdayWeekend),
            "week" => Ok(TimeScale::Week),
            _ => Err(Error::config("time.scale", format!("unknown scale `{s}`"))),
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "hour" => Ok(Granularity::Hour),
            "minute" => Ok(Granularity::Minute),
            _ => Err(Error::config("time.granularity", format!("unknown granularity `{s}`"))),
        }
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeScale::Day => "day",
            TimeScale::WeekdayWeekend => "weekday_weekend",
            TimeScale::Week => "week",
        })
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Hour => "hour",
            Granularity::Minute => "minute",
        })
    }
}

impl Granularity {
    pub fn units_per_day(self) -> usize {
        match self {
            Granularity::Hour => 24,
            Granularity::Minute => 1440,
        }
    }
}

/// Slot index inside a cyclical timestamp space, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimestampIndex(pub usize);

/// One cyclic group: slots `start..start + period` wrap around onto each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleGroup {
    pub start: usize,
    pub period: usize,
}

impl CycleGroup {
    pub fn contains(&self, n: usize) -> bool {
        n >= self.start && n < self.start + self.period
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.period
    }
}

/// Partition of `[0, count)` into independent cyclic groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleLayout {
    groups: Vec<CycleGroup>,
    count: usize,
}

impl CycleLayout {
    pub fn new(groups: Vec<CycleGroup>) -> Self {
        let mut next = 0;
        for g in &groups {
            assert_eq!(g.start, next, "cycle groups must tile the index space");
            assert!(g.period > 0);
            next += g.period;
        }
        Self { groups, count: next }
    }

    pub fn single(period: usize) -> Self {
        Self::new(vec![CycleGroup { start: 0, period }])
    }

    pub fn timestamp_count(&self) -> usize {
        self.count
    }

    pub fn groups(&self) -> &[CycleGroup] {
        &self.groups
    }

    pub fn group_of(&self, n: usize) -> CycleGroup {
        *self
            .groups
            .iter()
            .find(|g| g.contains(n))
            .unwrap_or_else(|| panic!("timestamp index {n} outside [0, {})", self.count))
    }

    /// Shortest arc between `l` and `n`, or `None` when they sit in different groups.
    pub fn distance(&self, l: usize, n: usize) -> Option<usize> {
        let g = self.group_of(n);
        if !g.contains(l) {
            return None;
        }
        let diff = l.abs_diff(n);
        Some(diff.min(g.period - diff))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimestampScheme {
    pub scale: TimeScale,
    pub granularity: Granularity,
}

impl Default for TimestampScheme {
    fn default() -> Self {
        Self {
            scale: TimeScale::Week,
            granularity: Granularity::Hour,
        }
    }
}

impl fmt::Display for TimestampScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.scale, self.granularity)
    }
}

impl TimestampScheme {
    pub fn new(scale: TimeScale, granularity: Granularity) -> Self {
        Self { scale, granularity }
    }

    pub fn timestamp_count(&self) -> usize {
        let per_day = self.granularity.units_per_day();
        match self.scale {
            TimeScale::Day => per_day,
            TimeScale::WeekdayWeekend => 2 * per_day,
            TimeScale::Week => 7 * per_day,
        }
    }

    pub fn layout(&self) -> CycleLayout {
        let per_day = self.granularity.units_per_day();
        match self.scale {
            TimeScale::Day => CycleLayout::single(per_day),
            TimeScale::Week => CycleLayout::single(7 * per_day),
            TimeScale::WeekdayWeekend => CycleLayout::new(vec![
                CycleGroup {
                    start: 0,
                    period: per_day,
                },
                CycleGroup {
                    start: per_day,
                    period: per_day,
                },
            ]),
        }
    }

    /// Map a local calendar time onto its slot. Monday 00:00 is slot 0.
    pub fn transform(&self, local: &NaiveDateTime) -> TimestampIndex {
        let weekday = local.weekday().num_days_from_monday() as usize;
        let unit = match self.granularity {
            Granularity::Hour => local.hour() as usize,
            Granularity::Minute => local.hour() as usize * 60 + local.minute() as usize,
        };
        let per_day = self.granularity.units_per_day();
        TimestampIndex(match self.scale {
            TimeScale::Day => unit,
            TimeScale::Week => weekday * per_day + unit,
            TimeScale::WeekdayWeekend if weekday < 5 => unit,
            TimeScale::WeekdayWeekend => per_day + unit,
        })
    }

    /// Calendar description of a slot: (hour of day, weekend flag when known).
    pub fn slot_calendar(&self, n: usize) -> (u32, Option<bool>) {
        let per_day = self.granularity.units_per_day();
        let unit = n % per_day;
        let hour = match self.granularity {
            Granularity::Hour => unit as u32,
            Granularity::Minute => (unit / 60) as u32,
        };
        let weekend = match self.scale {
            TimeScale::Day => None,
            TimeScale::Week => Some(n / per_day >= 5),
            TimeScale::WeekdayWeekend => Some(n >= per_day),
        };
        (hour, weekend)
    }
}

pub fn transform_timestamp(local: &NaiveDateTime, scheme: &TimestampScheme) -> TimestampIndex {
    scheme.transform(local)
}

/// Shortest distance on the cycle, `None` across weekday/weekend groups.
pub fn cyclical_distance(l: TimestampIndex, n: TimestampIndex, scheme: &TimestampScheme) -> Option<usize> {
    scheme.layout().distance(l.0, n.0)
}

/// Day-in-week slot (Monday = 0) used by the multi-granularity encoder.
pub fn day_of_week_index(local: &NaiveDateTime) -> TimestampIndex {
    TimestampIndex(local.weekday().num_days_from_monday() as usize)
}
