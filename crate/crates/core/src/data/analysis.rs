//! Corpus statistics and the returning-probability lag histogram.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Timelike, Utc};

use super::checkin::CheckIn;
use super::synthetic::is_daytime;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub user_count: usize,
    pub poi_count: usize,
    pub checkin_count: usize,
    pub first_checkin: Option<DateTime<Utc>>,
    pub last_checkin: Option<DateTime<Utc>>,
    /// Median of all successive same-user gaps; `None` without any gap.
    pub median_gap_hours: Option<f64>,
}

impl CorpusStats {
    pub fn span_days(&self) -> Option<f64> {
        Some((self.last_checkin? - self.first_checkin?).num_seconds() as f64 / 86_400.0)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["statistic", "value"])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record(["users", &self.user_count.to_string()])?;
        w.write_record(["pois", &self.poi_count.to_string()])?;
        w.write_record(["checkins", &self.checkin_count.to_string()])?;
        w.write_record(["first_checkin", &opt(self.first_checkin.map(|t| t.to_rfc3339()))])?;
        w.write_record(["last_checkin", &opt(self.last_checkin.map(|t| t.to_rfc3339()))])?;
        w.write_record(["span_days", &opt(self.span_days().map(|d| d.to_string()))])?;
        w.write_record(["median_gap_hours", &opt(self.median_gap_hours.map(|g| g.to_string()))])?;
        w.flush()?;
        Ok(())
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

pub fn corpus_stats(checkins: &[CheckIn]) -> CorpusStats {
    let mut by_user: BTreeMap<&str, Vec<DateTime<Utc>>> = BTreeMap::new();
    let mut pois: Vec<&str> = Vec::new();
    for c in checkins {
        by_user.entry(&c.user_id).or_default().push(c.utc_time);
        pois.push(&c.poi_id);
    }
    pois.sort_unstable();
    pois.dedup();
    let mut gaps = Vec::new();
    for times in by_user.values_mut() {
        times.sort();
        gaps.extend(
            times
                .windows(2)
                .map(|w| (w[1] - w[0]).num_milliseconds() as f64 / 3_600_000.0),
        );
    }
    CorpusStats {
        user_count: by_user.len(),
        poi_count: pois.len(),
        checkin_count: checkins.len(),
        first_checkin: checkins.iter().map(|c| c.utc_time).min(),
        last_checkin: checkins.iter().map(|c| c.utc_time).max(),
        median_gap_hours: median(&mut gaps),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturningOptions {
    pub bin_width_hours: f64,
    pub max_lag_hours: f64,
    /// Also produce daytime/nighttime histograms keyed on the earlier check-in.
    pub split_day_night: bool,
}

impl Default for ReturningOptions {
    fn default() -> Self {
        Self {
            bin_width_hours: 1.0,
            max_lag_hours: 168.0,
            split_day_night: true,
        }
    }
}

/// Revisit counts per lag bin, normalized by check-in count.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturningHistogram {
    pub bin_width_hours: f64,
    pub overall: Vec<f64>,
    /// Normalized by the number of daytime check-ins.
    pub daytime: Option<Vec<f64>>,
    /// Normalized by the number of nighttime check-ins.
    pub nighttime: Option<Vec<f64>>,
}

impl ReturningHistogram {
    pub fn bin_count(&self) -> usize {
        self.overall.len()
    }

    /// Lower edge of the fullest bin, ties to the earliest.
    pub fn argmax_lag_hours(&self) -> Option<f64> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in self.overall.iter().enumerate() {
            if p > 0.0 && best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
        best.map(|(i, _)| i as f64 * self.bin_width_hours)
    }

    /// CSV with header `lag_hours,probability[,daytime,nighttime]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let split = self.daytime.is_some();
        if split {
            w.write_record(["lag_hours", "probability", "daytime", "nighttime"])?;
        } else {
            w.write_record(["lag_hours", "probability"])?;
        }
        for (i, p) in self.overall.iter().enumerate() {
            let mut row = vec![(i as f64 * self.bin_width_hours).to_string(), p.to_string()];
            if let (Some(d), Some(n)) = (&self.daytime, &self.nighttime) {
                row.push(d[i].to_string());
                row.push(n[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn bin_count(options: &ReturningOptions) -> usize {
    (options.max_lag_hours / options.bin_width_hours).floor() as usize + 1
}

/// Lag histogram over every ordered pair (earlier, later) of same-user,
/// same-POI check-ins with `0 < lag <= max_lag_hours`.
pub fn returning_probability(checkins: &[CheckIn], options: &ReturningOptions) -> ReturningHistogram {
    assert!(options.bin_width_hours > 0.0 && options.max_lag_hours >= 0.0);
    let bins = bin_count(options);
    let mut overall = vec![0u64; bins];
    let mut day = vec![0u64; bins];
    let mut night = vec![0u64; bins];
    let mut groups: BTreeMap<(&str, &str), Vec<(i64, u32)>> = BTreeMap::new();
    for c in checkins {
        groups
            .entry((&c.user_id, &c.poi_id))
            .or_default()
            .push((c.utc_time.timestamp_millis(), c.local_time.hour()));
    }
    let max_ms = options.max_lag_hours * 3_600_000.0;
    for visits in groups.values_mut() {
        visits.sort_unstable();
        for (i, &(t0, hour)) in visits.iter().enumerate() {
            for &(t1, _) in &visits[i + 1..] {
                let lag_ms = (t1 - t0) as f64;
                if lag_ms > max_ms {
                    break;
                }
                if lag_ms <= 0.0 {
                    continue;
                }
                let bin = lag_bin(lag_ms, options.bin_width_hours);
                overall[bin] += 1;
                if is_daytime(hour) {
                    day[bin] += 1;
                } else {
                    night[bin] += 1;
                }
            }
        }
    }
    let total = checkins.len();
    let day_total = checkins.iter().filter(|c| is_daytime(c.local_time.hour())).count();
    ReturningHistogram {
        bin_width_hours: options.bin_width_hours,
        overall: normalize(&overall, total),
        daytime: options.split_day_night.then(|| normalize(&day, day_total)),
        nighttime: options.split_day_night.then(|| normalize(&night, total - day_total)),
    }
}

pub(crate) fn lag_bin(lag_ms: f64, bin_width_hours: f64) -> usize {
    (lag_ms / 3_600_000.0 / bin_width_hours).floor() as usize
}

fn normalize(counts: &[u64], total: usize) -> Vec<f64> {
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}
