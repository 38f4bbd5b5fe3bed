//! Teacher-forced evaluation over a split corpus and its CSV exports.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDateTime, Timelike};
use rayon::prelude::*;

use super::metrics::{rank_of_truth, RankSummary};
use crate::data::{is_daytime, SplitCorpus};
use crate::error::{Error, Result};
use crate::model::{SequenceModel, TimeEncoder};
use crate::numerics::ParamStore;

/// Which check-ins are predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    /// Every test check-in, with train and earlier test check-ins as context.
    Test,
    /// Every training check-in after the first.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Daytime,
    Nighttime,
    Weekday,
    Weekend,
}

impl Period {
    pub const ALL: [Period; 4] = [Period::Daytime, Period::Nighttime, Period::Weekday, Period::Weekend];

    pub fn of(local: &NaiveDateTime) -> [Period; 2] {
        let day = if is_daytime(local.hour()) {
            Period::Daytime
        } else {
            Period::Nighttime
        };
        let week = if local.weekday().num_days_from_monday() >= 5 {
            Period::Weekend
        } else {
            Period::Weekday
        };
        [day, week]
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Period::Daytime => "daytime",
            Period::Nighttime => "nighttime",
            Period::Weekday => "weekday",
            Period::Weekend => "weekend",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotMetrics {
    pub mrr: f64,
    pub count: usize,
    /// Bandwidth of the slot, when the model has one.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodMetrics {
    pub mrr: f64,
    pub count: usize,
    /// Mean bandwidth over the period's predictions.
    pub mean_sigma: Option<f64>,
}

/// One scored prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub user: usize,
    pub rank: usize,
    pub query_time: NaiveDateTime,
    pub slot: usize,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub summary: RankSummary,
    /// Keyed by the query time's slot under the model's timestamp scheme.
    pub per_timestamp: BTreeMap<usize, SlotMetrics>,
    pub per_period: BTreeMap<Period, PeriodMetrics>,
    pub predictions: Vec<Prediction>,
}

impl EvaluationReport {
    pub fn mrr(&self) -> f64 {
        self.summary.mrr
    }

    pub fn prediction_count(&self) -> usize {
        self.summary.count
    }

    pub fn acc_at(&self, n: usize) -> Option<f64> {
        self.summary.acc_at(n)
    }

    pub fn from_predictions(predictions: Vec<Prediction>) -> Self {
        let ranks: Vec<usize> = predictions.iter().map(|p| p.rank).collect();
        let mut slots: BTreeMap<usize, (Vec<usize>, Option<f64>)> = BTreeMap::new();
        let mut periods: BTreeMap<Period, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
        for p in &predictions {
            let e = slots.entry(p.slot).or_insert_with(|| (Vec::new(), p.sigma));
            e.0.push(p.rank);
            for period in Period::of(&p.query_time) {
                let e = periods.entry(period).or_default();
                e.0.push(p.rank);
                e.1.extend(p.sigma);
            }
        }
        let per_timestamp = slots
            .into_iter()
            .map(|(n, (r, sigma))| {
                let s = RankSummary::from_ranks(&r);
                (
                    n,
                    SlotMetrics {
                        mrr: s.mrr,
                        count: s.count,
                        sigma,
                    },
                )
            })
            .collect();
        let per_period = periods
            .into_iter()
            .map(|(k, (r, sigmas))| {
                let s = RankSummary::from_ranks(&r);
                let mean_sigma = (!sigmas.is_empty() && sigmas.len() == r.len())
                    .then(|| sigmas.iter().sum::<f64>() / sigmas.len() as f64);
                (
                    k,
                    PeriodMetrics {
                        mrr: s.mrr,
                        count: s.count,
                        mean_sigma,
                    },
                )
            })
            .collect();
        Self {
            summary: RankSummary::from_ranks(&ranks),
            per_timestamp,
            per_period,
            predictions,
        }
    }
}

/// Bandwidth of the first smoothed channel at the slot of `local`.
fn query_sigma(encoder: Option<&TimeEncoder>, params: &ParamStore, local: &NaiveDateTime) -> Option<f64> {
    let channel = encoder?.channels().first()?;
    let bw = &channel.smoother.bandwidths;
    Some(bw.sigma(params.value(bw.raw), channel.map.slot(local)))
}

pub fn evaluate<M: SequenceModel + ?Sized>(
    model: &M,
    params: &ParamStore,
    corpus: &SplitCorpus,
    split: EvalSplit,
) -> Result<EvaluationReport> {
    let values = params.values();
    let scheme = model.config().scheme;
    let per_user: Vec<Result<Vec<Prediction>>> = corpus
        .users
        .par_iter()
        .map(|seq| {
            let (first_target, end) = match split {
                EvalSplit::Test => (seq.train_len.max(1), seq.events.len()),
                EvalSplit::Train => (1, seq.train_len),
            };
            if first_target >= end {
                return Ok(Vec::new());
            }
            let mut state = model.new_state();
            model.run_segment(
                &values,
                None,
                &mut state,
                seq.user,
                &seq.events,
                0..first_target - 1,
                false,
            )?;
            let out = model.run_segment(
                &values,
                None,
                &mut state,
                seq.user,
                &seq.events,
                first_target - 1..end - 1,
                true,
            )?;
            Ok(out
                .logits
                .iter()
                .zip(&seq.events[first_target..end])
                .map(|(logits, target)| Prediction {
                    user: seq.user,
                    rank: rank_of_truth(logits, target.poi),
                    query_time: target.local_time,
                    slot: scheme.transform(&target.local_time).0,
                    sigma: query_sigma(model.time_encoder(), params, &target.local_time),
                })
                .collect())
        })
        .collect();
    let mut predictions = Vec::new();
    for p in per_user {
        predictions.extend(p?);
    }
    if predictions.is_empty() {
        return Err(Error::Evaluation(match split {
            EvalSplit::Test => "test split is empty".into(),
            EvalSplit::Train => "training split has no predictable check-ins".into(),
        }));
    }
    Ok(EvaluationReport::from_predictions(predictions))
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub variant: String,
    pub cell: String,
    pub acc1: f64,
    pub acc5: f64,
    pub acc10: f64,
    pub mrr: f64,
}

impl MetricsRow {
    pub fn new(variant: impl Into<String>, cell: impl Into<String>, summary: &RankSummary) -> Self {
        Self {
            variant: variant.into(),
            cell: cell.into(),
            acc1: summary.acc1,
            acc5: summary.acc5,
            acc10: summary.acc10,
            mrr: summary.mrr,
        }
    }
}

pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variant", "cell", "acc1", "acc5", "acc10", "mrr"])?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.cell.clone(),
            r.acc1.to_string(),
            r.acc5.to_string(),
            r.acc10.to_string(),
            r.mrr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: Option<&str>, what: &str) -> Result<f64> {
    field
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Input(format!("bad {what} value {field:?}")))
}

pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(MetricsRow {
            variant: rec.get(0).unwrap_or_default().to_string(),
            cell: rec.get(1).unwrap_or_default().to_string(),
            acc1: parse_f64(rec.get(2), "acc1")?,
            acc5: parse_f64(rec.get(3), "acc5")?,
            acc10: parse_f64(rec.get(4), "acc10")?,
            mrr: parse_f64(rec.get(5), "mrr")?,
        });
    }
    Ok(rows)
}

/// `n,mrr,count,sigma`; `sigma` is empty for models without bandwidths.
pub fn write_per_timestamp_csv<W: Write>(writer: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "mrr", "count", "sigma"])?;
    for (n, m) in &report.per_timestamp {
        w.write_record([
            n.to_string(),
            m.mrr.to_string(),
            m.count.to_string(),
            m.sigma.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_per_timestamp_csv<R: Read>(reader: R) -> Result<BTreeMap<usize, SlotMetrics>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let n = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Input("bad slot index".into()))?;
        let count = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Input("bad count".into()))?;
        let sigma = match rec.get(3) {
            None | Some("") => None,
            s => Some(parse_f64(s, "sigma")?),
        };
        out.insert(
            n,
            SlotMetrics {
                mrr: parse_f64(rec.get(1), "mrr")?,
                count,
                sigma,
            },
        );
    }
    Ok(out)
}

/// `period,mrr,count,mean_sigma`
pub fn write_per_period_csv<W: Write>(writer: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["period", "mrr", "count", "mean_sigma"])?;
    for (p, m) in &report.per_period {
        w.write_record([
            p.to_string(),
            m.mrr.to_string(),
            m.count.to_string(),
            m.mean_sigma.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
