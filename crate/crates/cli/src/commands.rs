use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use replay_core::data::{
    build_trajectories, corpus_stats, generate_synthetic, ingest, returning_probability, save_checkins,
    split_with_minimum, CorpusStats, IngestOptions, ReturningOptions, SyntheticSpec,
};
use replay_core::eval::{
    write_bandwidths_csv, write_metrics_csv, write_per_period_csv, write_per_timestamp_csv, MetricsRow,
};
use replay_core::model::{train_epoch, SequenceModel, TrainProgress};
use replay_core::temporal::{Granularity, TimeScale};
use replay_core::{
    bandwidth_report, evaluate as evaluate_model, AnyModel, CellKind, Checkpoint, Error, EvalSplit, RunConfig,
    SplitCorpus, Variant,
};

use crate::{AnalyzeArgs, GenerateArgs, RunArgs};

pub const CHECKINS_FILE: &str = "checkins.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "config.toml";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> replay_core::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn log_stats(stats: &CorpusStats) {
    info!(
        "{} users, {} POIs, {} check-ins, span {} days, median gap {} h",
        stats.user_count,
        stats.poi_count,
        stats.checkin_count,
        stats.span_days().map_or("-".into(), |d| format!("{d:.1}")),
        stats.median_gap_hours.map_or("-".into(), |g| format!("{g:.2}")),
    );
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let (mut spec, spec_seed) = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| Error::config(path.display().to_string(), e.message()))?;
            let has_seed = table.contains_key("seed");
            let spec: SyntheticSpec = table
                .try_into()
                .map_err(|e: toml::de::Error| Error::config(path.display().to_string(), e.message()))?;
            (spec.clone(), has_seed.then_some(spec.seed))
        }
        None => (SyntheticSpec::default(), None),
    };
    spec.seed = a
        .seed
        .or(spec_seed)
        .ok_or_else(|| Error::config("seed", "a seed is required (spec key `seed` or --seed)"))?;
    spec.validate()?;
    let checkins = generate_synthetic(&spec)?;
    if checkins.is_empty() {
        warn!("the spec produces no check-ins (user_count = {})", spec.user_count);
    }
    create_dir(&a.out)?;
    let path = a.out.join(CHECKINS_FILE);
    save_checkins(&path, &checkins).with_context(|| format!("writing {}", path.display()))?;
    let stats = corpus_stats(&checkins);
    write_file(&a.out.join("stats.csv"), |w| stats.write_csv(w))?;
    info!("wrote {}", path.display());
    log_stats(&stats);
    Ok(())
}

/// Config file (or defaults) with command-line overrides applied.
fn resolve(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = Some(seed);
    }
    if let Some(v) = &a.variant {
        cfg.model.variant = Some(v.parse::<Variant>()?.name().to_string());
    }
    if let Some(c) = &a.cell {
        cfg.model.cell = c.parse::<CellKind>()?;
    }
    if let Some(s) = &a.time_scale {
        cfg.time.scale = s.parse::<TimeScale>()?;
    }
    if let Some(g) = &a.time_granularity {
        cfg.time.granularity = g.parse::<Granularity>()?;
    }
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    if let Some(d) = &a.data {
        cfg.data.path = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    Ok(cfg
        .out
        .clone()
        .ok_or_else(|| Error::config("out", "an output directory is required (config `out` or --out)"))?)
}

fn load_corpus(cfg: &RunConfig) -> Result<SplitCorpus> {
    let path = cfg.data.path.as_ref().ok_or_else(|| {
        Error::config(
            "data.path",
            "a check-in file is required (config `data.path` or --data)",
        )
    })?;
    let options = IngestOptions {
        delimiter: cfg.data.delimiter as u8,
        ..Default::default()
    };
    let ingested = ingest(path, options).with_context(|| format!("reading {}", path.display()))?;
    for w in &ingested.report.warnings {
        warn!("{w}");
    }
    let trajectories = build_trajectories(&ingested.checkins);
    let corpus = split_with_minimum(
        &trajectories.trajectories,
        cfg.data.train_fraction,
        cfg.data.min_checkins,
    );
    if !corpus.dropped_users.is_empty() {
        info!(
            "dropped {} users with fewer than {} check-ins",
            corpus.dropped_users.len(),
            cfg.data.min_checkins
        );
    }
    if corpus.users.is_empty() {
        return Err(Error::Input(format!(
            "{}: no user has at least {} check-ins",
            path.display(),
            cfg.data.min_checkins
        ))
        .into());
    }
    info!(
        "{} users, {} POIs, {} train / {} test check-ins",
        corpus.user_count(),
        corpus.poi_count(),
        corpus.train_event_count(),
        corpus.test_event_count()
    );
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq)]
struct LossRow {
    epoch: u64,
    mean_loss: f64,
    steps: usize,
}

fn write_loss_log(path: &Path, rows: &[LossRow]) -> Result<()> {
    write_file(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["epoch", "mean_loss", "steps"])?;
        for r in rows {
            w.write_record([r.epoch.to_string(), r.mean_loss.to_string(), r.steps.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn read_loss_log(path: &Path) -> Result<Vec<LossRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = || Error::Input(format!("{}: malformed row {:?}", path.display(), rec));
        rows.push(LossRow {
            epoch: field(0).parse().map_err(|_| bad())?,
            mean_loss: field(1).parse().map_err(|_| bad())?,
            steps: field(2).parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

fn save_checkpoint(
    path: &Path,
    seed: u64,
    progress: TrainProgress,
    model_params: &replay_core::ParamStore,
) -> Result<()> {
    Checkpoint {
        seed,
        epochs_completed: progress.epochs_completed,
        optimizer_step: progress.optimizer_step,
        params: model_params.clone(),
    }
    .save(path)
    .with_context(|| format!("writing {}", path.display()))
}

pub fn train(a: &RunArgs) -> Result<()> {
    let cfg = resolve(a)?;
    let seed = cfg.seed()?;
    let out = out_dir(&cfg)?;
    let corpus = load_corpus(&cfg)?;
    let model_cfg = cfg.model_config(corpus.user_count(), corpus.poi_count())?;
    let (model, mut params) = AnyModel::build(model_cfg, seed)?;
    create_dir(&out)?;
    let loss_path = out.join(LOSS_FILE);
    let mut progress = TrainProgress::default();
    let mut rows = Vec::new();
    if let Some(path) = &a.checkpoint {
        let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
        if ck.seed != seed {
            return Err(Error::config(
                "seed",
                format!("checkpoint was trained with seed {}, this run uses {seed}", ck.seed),
            )
            .into());
        }
        params
            .load_from(&ck.params)
            .with_context(|| format!("{} does not fit the configured model", path.display()))?;
        progress = TrainProgress {
            epochs_completed: ck.epochs_completed,
            optimizer_step: ck.optimizer_step,
        };
        if loss_path.exists() {
            rows = read_loss_log(&loss_path)?;
            rows.retain(|r| r.epoch <= progress.epochs_completed);
        }
        info!("resuming after epoch {}", progress.epochs_completed);
    }
    fs::write(out.join(CONFIG_FILE), cfg.to_toml_string()).context("writing config.toml")?;
    let options = cfg.training.options();
    while progress.epochs_completed < cfg.training.epochs {
        let stats = match train_epoch(
            &model,
            &corpus,
            &mut params,
            &cfg.optimizer,
            &mut progress,
            seed,
            &options,
        ) {
            Ok(s) => s,
            Err(e) => {
                write_loss_log(&loss_path, &rows)?;
                return Err(e).with_context(|| format!("epoch {}", progress.epochs_completed + 1));
            }
        };
        info!(
            "epoch {}/{}: loss {:.5}",
            stats.epoch, cfg.training.epochs, stats.mean_loss
        );
        rows.push(LossRow {
            epoch: stats.epoch,
            mean_loss: stats.mean_loss,
            steps: stats.step_count,
        });
        write_loss_log(&loss_path, &rows)?;
        let every = cfg.training.save_every;
        if every > 0 && stats.epoch % every == 0 {
            save_checkpoint(
                &out.join(format!("checkpoint_epoch{:04}.bin", stats.epoch)),
                seed,
                progress,
                &params,
            )?;
        }
    }
    write_loss_log(&loss_path, &rows)?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), seed, progress, &params)?;
    info!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

pub fn evaluate(a: &RunArgs) -> Result<()> {
    let cfg = resolve(a)?;
    let seed = cfg.seed()?;
    let out = out_dir(&cfg)?;
    let corpus = load_corpus(&cfg)?;
    let model_cfg = cfg.model_config(corpus.user_count(), corpus.poi_count())?;
    let (model, mut params) = AnyModel::build(model_cfg, seed)?;
    let ck_path = a.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let ck = Checkpoint::load(&ck_path).with_context(|| format!("loading {}", ck_path.display()))?;
    params
        .load_from(&ck.params)
        .with_context(|| format!("{} does not fit the configured model", ck_path.display()))?;
    let split = if a.train_split {
        EvalSplit::Train
    } else {
        EvalSplit::Test
    };
    let report = evaluate_model(&model, &params, &corpus, split)?;
    create_dir(&out)?;
    let mc = model.config();
    let variant = mc.variant().map_or("custom", Variant::name);
    let row = MetricsRow::new(variant, mc.cell.to_string(), &report.summary);
    write_file(&out.join("metrics.csv"), |w| write_metrics_csv(w, &[row]))?;
    write_file(&out.join("per_timestamp.csv"), |w| write_per_timestamp_csv(w, &report))?;
    write_file(&out.join("per_period.csv"), |w| write_per_period_csv(w, &report))?;
    match bandwidth_report(&model, &params) {
        Ok(bw) => {
            write_file(&out.join("bandwidths.csv"), |w| write_bandwidths_csv(w, &bw))?;
            info!("mean σ daytime {:.4}, nighttime {:.4}", bw.daytime, bw.nighttime);
        }
        Err(Error::Evaluation(msg)) => warn!("bandwidths.csv not written: {msg}"),
        Err(e) => return Err(e.into()),
    }
    info!(
        "{} predictions: Acc@1 {:.4} Acc@5 {:.4} Acc@10 {:.4} MRR {:.4}",
        report.prediction_count(),
        report.summary.acc1,
        report.summary.acc5,
        report.summary.acc10,
        report.mrr()
    );
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    if !(a.bin_width_hours > 0.0 && a.bin_width_hours.is_finite()) {
        return Err(Error::config("bin_width_hours", "must be > 0").into());
    }
    if !(a.max_lag_hours >= 0.0 && a.max_lag_hours.is_finite()) {
        return Err(Error::config("max_lag_hours", "must be >= 0").into());
    }
    if !a.delimiter.is_ascii() {
        return Err(Error::config("delimiter", "must be a single ASCII character").into());
    }
    let options = IngestOptions {
        delimiter: a.delimiter as u8,
        ..Default::default()
    };
    let ingested = ingest(&a.data, options).with_context(|| format!("reading {}", a.data.display()))?;
    for w in &ingested.report.warnings {
        warn!("{w}");
    }
    if ingested.checkins.is_empty() {
        return Err(Error::Input(format!("{}: corpus is empty", a.data.display())).into());
    }
    let hist = returning_probability(
        &ingested.checkins,
        &ReturningOptions {
            bin_width_hours: a.bin_width_hours,
            max_lag_hours: a.max_lag_hours,
            split_day_night: true,
        },
    );
    let stats = corpus_stats(&ingested.checkins);
    create_dir(&a.out)?;
    write_file(&a.out.join("returning.csv"), |w| hist.write_csv(w))?;
    write_file(&a.out.join("stats.csv"), |w| stats.write_csv(w))?;
    log_stats(&stats);
    if let Some(peak) = hist.argmax_lag_hours() {
        info!("returning probability peaks at {peak} h");
    }
    Ok(())
}
