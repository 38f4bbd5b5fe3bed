//! Seeded generator of check-in corpora with hour-dependent regularity.
//!
//! Every POI belongs to one daypart (a block of consecutive hours, `poi %
//! dayparts`). Each user owns one regular POI per daypart. A check-in at local
//! hour `h` revisits the user's regular POI for `h` with probability `ρ(h)`
//! (times `weekend_damping` on Saturday and Sunday) and otherwise picks a POI
//! uniformly at random. Gaps between check-ins are `24 / rate` hours scaled by
//! a uniform factor in `[0.5, 1.5]`.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::checkin::CheckIn;
use crate::error::{Error, Result};
use crate::numerics::rng::labeled_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub user_count: usize,
    pub poi_count: usize,
    pub days: u32,
    /// Revisit probability per local hour of day, 24 entries.
    pub regularity: Vec<f64>,
    /// Multiplier on `regularity` for weekend check-ins; 1 disables damping.
    pub weekend_damping: f64,
    pub seed: u64,
    /// Mean check-ins per user per day.
    pub rate_per_day: f64,
    /// Number of hour blocks a day is divided into; one regular POI per block.
    pub dayparts: usize,
    /// First simulated local day (a Monday by default).
    pub start_date: NaiveDate,
    pub tz_offset_minutes: i32,
    pub center_lat: f64,
    pub center_lon: f64,
    /// POIs are scattered uniformly within this many degrees of the center.
    pub spread_deg: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            user_count: 50,
            poi_count: 100,
            days: 90,
            regularity: day_night_profile(0.9, 0.3),
            weekend_damping: 1.0,
            seed: 0,
            rate_per_day: 2.0,
            dayparts: 8,
            start_date: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
            tz_offset_minutes: -300,
            center_lat: 40.75,
            center_lon: -73.98,
            spread_deg: 0.05,
        }
    }
}

/// Daytime hours are 6:00-18:00.
pub fn is_daytime(hour: u32) -> bool {
    (6..18).contains(&hour)
}

/// `day` for 6:00-18:00, `night` otherwise.
pub fn day_night_profile(day: f64, night: f64) -> Vec<f64> {
    (0..24).map(|h| if is_daytime(h) { day } else { night }).collect()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.regularity.len() != 24 {
            return Err(Error::config(
                "regularity",
                format!("needs 24 hourly values, got {}", self.regularity.len()),
            ));
        }
        if let Some(bad) = self.regularity.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::config("regularity", format!("value {bad} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.weekend_damping) {
            return Err(Error::config("weekend_damping", "must lie in [0, 1]"));
        }
        if !(self.rate_per_day > 0.0 && self.rate_per_day.is_finite()) {
            return Err(Error::config("rate_per_day", "must be > 0"));
        }
        if self.dayparts == 0 || 24 % self.dayparts != 0 {
            return Err(Error::config("dayparts", "must divide 24"));
        }
        if self.user_count > 0 && self.poi_count < self.dayparts {
            return Err(Error::config("poi_count", "needs at least one POI per daypart"));
        }
        if self.spread_deg.is_nan()
            || self.spread_deg < 0.0
            || !(-90.0..=90.0).contains(&(self.center_lat - self.spread_deg))
            || !(-90.0..=90.0).contains(&(self.center_lat + self.spread_deg))
            || !(-180.0..=180.0).contains(&(self.center_lon - self.spread_deg))
            || !(-180.0..=180.0).contains(&(self.center_lon + self.spread_deg))
        {
            return Err(Error::config("spread_deg", "POI box leaves the valid coordinate range"));
        }
        Ok(())
    }

    pub fn daypart_of_hour(&self, hour: u32) -> usize {
        hour as usize * self.dayparts / 24
    }

    pub fn expected_checkins(&self) -> f64 {
        self.user_count as f64 * self.days as f64 * self.rate_per_day
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub checkins: Vec<CheckIn>,
    /// `regular_pois[user][daypart]`
    pub regular_pois: Vec<Vec<usize>>,
    /// Whether each check-in (same order) was drawn as a regular revisit.
    pub was_regular: Vec<bool>,
}

impl SyntheticCorpus {
    /// POI a user is bound to at a given local hour.
    pub fn bound_poi(&self, spec: &SyntheticSpec, user: usize, hour: u32) -> usize {
        self.regular_pois[user][spec.daypart_of_hour(hour)]
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<CheckIn>> {
    Ok(generate_with_truth(spec)?.checkins)
}

pub fn generate_with_truth(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut poi_rng = labeled_rng(spec.seed, "synthetic/pois");
    let locations: Vec<(f64, f64)> = (0..spec.poi_count)
        .map(|_| {
            let lat = spec.center_lat + poi_rng.random_range(-1.0..=1.0) * spec.spread_deg;
            let lon = spec.center_lon + poi_rng.random_range(-1.0..=1.0) * spec.spread_deg;
            (lat, lon)
        })
        .collect();

    let origin: NaiveDateTime = spec.start_date.and_hms_opt(0, 0, 0).expect("midnight");
    let horizon_hours = spec.days as f64 * 24.0;
    let mean_gap = 24.0 / spec.rate_per_day;
    let offset = Duration::minutes(spec.tz_offset_minutes as i64);

    let mut corpus = SyntheticCorpus {
        checkins: Vec::new(),
        regular_pois: Vec::with_capacity(spec.user_count),
        was_regular: Vec::new(),
    };
    for user in 0..spec.user_count {
        let mut rng = labeled_rng(spec.seed, &format!("synthetic/user/{user}"));
        let regular: Vec<usize> = (0..spec.dayparts)
            .map(|part| {
                let per_part = (spec.poi_count - part).div_ceil(spec.dayparts);
                part + spec.dayparts * rng.random_range(0..per_part)
            })
            .collect();
        let mut t = rng.random_range(0.0..mean_gap);
        while t < horizon_hours {
            let local = origin + Duration::milliseconds((t * 3_600_000.0).round() as i64);
            let hour = local.hour();
            let weekend = local.weekday().num_days_from_monday() >= 5;
            let mut rho = spec.regularity[hour as usize];
            if weekend {
                rho *= spec.weekend_damping;
            }
            let regular_visit = rng.random::<f64>() < rho;
            let poi = if regular_visit {
                regular[spec.daypart_of_hour(hour)]
            } else {
                rng.random_range(0..spec.poi_count)
            };
            let (lat, lon) = locations[poi];
            let utc = (local - offset).and_utc();
            corpus.checkins.push(CheckIn::new(
                user.to_string(),
                poi.to_string(),
                utc,
                lat,
                lon,
                Some(spec.tz_offset_minutes),
            )?);
            corpus.was_regular.push(regular_visit);
            t += mean_gap * rng.random_range(0.5..1.5);
        }
        corpus.regular_pois.push(regular);
    }
    if spec.user_count == 0 {
        log::warn!("synthetic spec has no users; corpus is empty");
    }
    Ok(corpus)
}
