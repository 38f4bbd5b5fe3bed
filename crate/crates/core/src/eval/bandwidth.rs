//! Learnt-bandwidth tables and their period averages.

use std::io::Write;

use crate::data::is_daytime;
use crate::error::{Error, Result};
use crate::model::{SequenceModel, SlotMap};
use crate::numerics::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBandwidths {
    pub name: String,
    /// Effective σ per slot.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourBandwidth {
    pub hour: u32,
    pub weekday: Option<f64>,
    pub weekend: Option<f64>,
    pub all: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthReport {
    pub channels: Vec<ChannelBandwidths>,
    /// Hour-of-day averages of the first channel.
    pub hourly: Vec<HourBandwidth>,
    pub daytime: f64,
    pub nighttime: f64,
    pub weekday: Option<f64>,
    pub weekend: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean σ over slots whose hour of day satisfies `keep`.
pub fn mean_sigma_over_hours(report: &BandwidthReport, keep: impl Fn(u32) -> bool) -> Option<f64> {
    let picked: Vec<f64> = report.hourly.iter().filter(|h| keep(h.hour)).map(|h| h.all).collect();
    mean(&picked)
}

pub fn bandwidth_report<M: SequenceModel + ?Sized>(model: &M, params: &ParamStore) -> Result<BandwidthReport> {
    let channels = model.time_encoder().map(|e| e.channels()).unwrap_or_default();
    if channels.is_empty() {
        return Err(Error::Evaluation(
            "this model has no smoothed timestamp embeddings, so it has no bandwidths".into(),
        ));
    }
    let tables: Vec<ChannelBandwidths> = channels
        .iter()
        .map(|c| ChannelBandwidths {
            name: c.name.clone(),
            sigma: c.smoother.bandwidths.sigmas(params),
        })
        .collect();

    let mut by_hour: Vec<[Vec<f64>; 3]> = (0..24).map(|_| Default::default()).collect();
    let (mut weekday, mut weekend) = (Vec::new(), Vec::new());
    let SlotMap::Scheme(scheme) = channels[0].map else {
        unreachable!("the first channel always follows a timestamp scheme")
    };
    for (n, &s) in tables[0].sigma.iter().enumerate() {
        let (hour, is_weekend) = scheme.slot_calendar(n);
        let bucket = &mut by_hour[hour as usize];
        bucket[2].push(s);
        match is_weekend {
            Some(true) => {
                bucket[1].push(s);
                weekend.push(s);
            }
            Some(false) => {
                bucket[0].push(s);
                weekday.push(s);
            }
            None => {}
        }
    }
    // Day-in-week channel of the multi-granularity layout.
    if let Some(dow) = channels.iter().position(|c| c.map == SlotMap::DayOfWeek) {
        weekday.extend_from_slice(&tables[dow].sigma[..5]);
        weekend.extend_from_slice(&tables[dow].sigma[5..]);
    }
    let hourly: Vec<HourBandwidth> = by_hour
        .iter()
        .enumerate()
        .map(|(h, b)| HourBandwidth {
            hour: h as u32,
            weekday: mean(&b[0]),
            weekend: mean(&b[1]),
            all: mean(&b[2]).expect("every hour has a slot"),
        })
        .collect();
    let pick = |day: bool| -> Vec<f64> {
        by_hour
            .iter()
            .enumerate()
            .filter(|(h, _)| is_daytime(*h as u32) == day)
            .flat_map(|(_, b)| b[2].iter().copied())
            .collect()
    };
    Ok(BandwidthReport {
        daytime: mean(&pick(true)).expect("daytime slots"),
        nighttime: mean(&pick(false)).expect("nighttime slots"),
        weekday: mean(&weekday),
        weekend: mean(&weekend),
        channels: tables,
        hourly,
    })
}

/// `n,sigma`; with several tables a third column names the table.
pub fn write_bandwidths_csv<W: Write>(writer: W, report: &BandwidthReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let multi = report.channels.len() > 1;
    if multi {
        w.write_record(["n", "sigma", "table"])?;
    } else {
        w.write_record(["n", "sigma"])?;
    }
    for c in &report.channels {
        for (n, s) in c.sigma.iter().enumerate() {
            if multi {
                w.write_record([n.to_string(), s.to_string(), c.name.clone()])?;
            } else {
                w.write_record([n.to_string(), s.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ReplayModel, Variant};

    #[test]
    fn untrained_bandwidths_are_uniform() {
        let (model, params) = ReplayModel::build(ModelConfig::for_corpus(1, 2), 0).unwrap();
        let r = bandwidth_report(&model, &params).unwrap();
        assert_eq!(r.channels[0].sigma.len(), 168);
        assert!(r.channels[0].sigma.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!((r.daytime - r.nighttime).abs() < 1e-12);
        assert_eq!(r.weekday, r.weekend);
    }

    #[test]
    fn fixed_variant_reports_its_value() {
        let cfg = ModelConfig {
            fixed_bandwidth: Some(2.5),
            ..ModelConfig::for_corpus(1, 2)
        }
        .with_variant(Variant::FixedB);
        let (model, params) = ReplayModel::build(cfg, 0).unwrap();
        let r = bandwidth_report(&model, &params).unwrap();
        assert!(r.channels[0].sigma.iter().all(|&s| s == 2.5));
    }

    #[test]
    fn no_bandwidths_without_smoothing() {
        let cfg = ModelConfig::for_corpus(1, 2).with_variant(Variant::NoSte);
        let (model, params) = ReplayModel::build(cfg, 0).unwrap();
        assert!(matches!(bandwidth_report(&model, &params), Err(Error::Evaluation(_))));
    }

    #[test]
    fn multi_granularity_has_two_tables() {
        let cfg = ModelConfig::for_corpus(1, 2).with_variant(Variant::MultiG);
        let (model, params) = ReplayModel::build(cfg, 0).unwrap();
        let r = bandwidth_report(&model, &params).unwrap();
        let sizes: Vec<_> = r.channels.iter().map(|c| c.sigma.len()).collect();
        assert_eq!(sizes, vec![24, 7]);
        assert!(r.weekday.is_some());
    }
}
