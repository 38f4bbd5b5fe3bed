//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any failed.

use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, Utc};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use replay_core::data::{
    build_trajectories, generate_synthetic, returning_probability, split_chronological, ReturningOptions,
};
use replay_core::eval::{mean_sigma_over_hours, write_metrics_csv, MetricsRow, RankSummary};
use replay_core::model::{
    corpus_loss, corpus_loss_and_grad, predict_next, train_epoch, FlashbackModel, TrainOptions, TrainProgress,
};
use replay_core::temporal::{smooth_embedding, smoothing_weights, CycleLayout, Granularity, TimeScale};
use replay_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// Tolerances, pinned.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const WEIGHT_TOL: f64 = 1e-6;
const SHARP_TOL: f64 = 1e-10;
const FLAT_TOL: f64 = 1e-6;
const SUM_TOL: f64 = 1e-12;
const OVERFIT_LOSS: f64 = 0.05;
const OVERFIT_MAX_EPOCHS: u64 = 500;
const OVERFIT_BUDGET: Duration = Duration::from_secs(120);
const ABLATION_MARGIN: f64 = 0.05;
const ABLATION_BUDGET: Duration = Duration::from_secs(20 * 60);
const ABLATION_EPOCHS: u64 = 20;
const MRR_TOL: f64 = 1e-9;

fn synthetic_corpus(spec: &SyntheticSpec) -> SplitCorpus {
    let checkins = generate_synthetic(spec).expect("valid spec");
    split_chronological(&build_trajectories(&checkins).trajectories, 0.8)
}

fn train(model: &AnyModel, params: &mut ParamStore, corpus: &SplitCorpus, seed: u64, epochs: u64, lr: f64) -> Vec<f64> {
    let opt = OptimizerConfig {
        learning_rate: lr,
        ..Default::default()
    };
    let mut progress = TrainProgress::default();
    (0..epochs)
        .map(|_| {
            train_epoch(
                model,
                corpus,
                params,
                &opt,
                &mut progress,
                seed,
                &TrainOptions::default(),
            )
            .expect("finite training")
            .mean_loss
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec {
        user_count: 5,
        poi_count: 20,
        days: 18,
        dayparts: 4,
        seed: 11,
        ..Default::default()
    };
    let corpus = synthetic_corpus(&spec);
    let mut worst = (0.0, String::new());
    for variant in Variant::ALL {
        for cell in [CellKind::Vanilla, CellKind::Lstm, CellKind::Gru] {
            let cfg = ModelConfig {
                cell,
                init_scale: 0.5,
                ..ModelConfig::for_corpus(corpus.user_count(), corpus.poi_count())
            }
            .with_variant(variant);
            let (model, mut params) = AnyModel::build(cfg, 11).expect("model builds");
            corpus_loss_and_grad(&model, &mut params, &corpus).expect("loss");
            let report = finite_diff_check(|p| corpus_loss(&model, p, &corpus), &mut params, GRAD_STEP, 12, 11)
                .expect("deterministic loss");
            if report.max_relative_error >= worst.0 {
                worst = (report.max_relative_error, format!("{variant}/{cell}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < GRAD_REL_TOL && elapsed < GRAD_BUDGET,
        format!(
            "{} users, {} POIs, worst relative error {:.2e} ({}), {:.1}s",
            corpus.user_count(),
            corpus.poi_count(),
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn flashback_points() -> Outcome {
    let cfg = FlashbackConfig::default();
    let w = |t: f64, d: f64| {
        flashback_weight(
            ContextDelta {
                delta_t_days: t,
                delta_d_km: d,
            },
            &cfg,
        )
    };
    let at_zero = w(0.0, 0.0);
    let half_day: f64 = [0.0, 0.1, 3.0].iter().map(|&d| w(0.5, d)).fold(0.0, f64::max);
    let one_day = w(1.0, 0.0);
    let pass = at_zero == 1.0 && half_day.abs() < WEIGHT_TOL && (one_day - 0.904837).abs() < WEIGHT_TOL;
    outcome(
        pass,
        format!("w(0,0) = {at_zero}, max w(0.5 d, *) = {half_day:.1e}, w(1 d, 0) = {one_day:.6}"),
    )
}

fn cyclical_laws() -> Outcome {
    let day = TimestampScheme::new(TimeScale::Day, Granularity::Hour);
    let week = TimestampScheme::new(TimeScale::Week, Granularity::Hour);
    let dist = |s: &TimestampScheme, l: usize, n: usize| {
        replay_core::temporal::cyclical_distance(TimestampIndex(l), TimestampIndex(n), s).expect("single cycle")
    };
    let mut failures = Vec::new();
    for l in 0..24 {
        for n in 0..24 {
            let d = dist(&day, l, n);
            if d != dist(&day, n, l) || d > 12 || (d == 0) != (l == n) {
                failures.push(format!("P=24 ({l},{n})"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let (l, n) = (rng.random_range(0..168), rng.random_range(0..168));
        let d = dist(&week, l, n);
        let brute = (0..168)
            .map(|k| (l + k) % 168)
            .position(|x| x == n)
            .unwrap()
            .min((0..168).map(|k| (n + k) % 168).position(|x| x == l).unwrap());
        if d != dist(&week, n, l) || d > 84 || d != brute {
            failures.push(format!("P=168 ({l},{n})"));
        }
    }
    let sunday = NaiveDate::from_ymd_opt(2023, 11, 12)
        .unwrap()
        .and_hms_opt(23, 0, 0)
        .unwrap();
    let monday = NaiveDate::from_ymd_opt(2023, 11, 13)
        .unwrap()
        .and_hms_opt(1, 0, 0)
        .unwrap();
    let tuesday = NaiveDate::from_ymd_opt(2023, 11, 7)
        .unwrap()
        .and_hms_opt(15, 0, 0)
        .unwrap();
    let (s, m) = (week.transform(&sunday), week.transform(&monday));
    let sun_mon = dist(&week, s.0, m.0);
    let tue = week.transform(&tuesday).0;
    let pass = failures.is_empty() && s.0 == 167 && m.0 == 1 && sun_mon == 2 && tue == 39;
    outcome(
        pass,
        format!(
            "{} law violations, Sun 23:00 -> {}, Mon 01:00 -> {}, distance {sun_mon}, Tue 15:00 -> {tue}",
            failures.len(),
            s.0,
            m.0
        ),
    )
}

fn smoothing_limits() -> Outcome {
    let layout = CycleLayout::single(168);
    let dim = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let table: Vec<f64> = (0..168 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean: Vec<f64> = (0..dim)
        .map(|k| (0..168).map(|l| table[l * dim + k]).sum::<f64>() / 168.0)
        .collect();
    let (mut sharp, mut flat) = (0.0f64, 0.0f64);
    for n in 0..168 {
        let s = smooth_embedding(TimestampIndex(n), 1e-3, &table, dim, &layout);
        let f = smooth_embedding(TimestampIndex(n), 1e6, &table, dim, &layout);
        for k in 0..dim {
            sharp = sharp.max((s[k] - table[n * dim + k]).abs());
            flat = flat.max((f[k] - mean[k]).abs());
        }
    }
    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(0..168);
        let sigma = 10f64.powf(rng.random_range(-3.0..4.0));
        let total: f64 = smoothing_weights(TimestampIndex(n), sigma, &layout).iter().sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    outcome(
        sharp < SHARP_TOL && flat < FLAT_TOL && worst_sum < SUM_TOL,
        format!("sharp {sharp:.1e}, flat {flat:.1e}, weight-sum error {worst_sum:.1e}"),
    )
}

fn alternating_corpus() -> SplitCorpus {
    let t0 = DateTime::<Utc>::from_timestamp(1_672_650_000, 0).unwrap();
    let sequences = [(0, 1), (2, 3)]
        .iter()
        .map(|&(a, b)| {
            (0..40)
                .map(|i| {
                    let utc = t0 + chrono::Duration::hours(3 * i);
                    let c = CheckIn::new("u", "p", utc, 40.0, -74.0, Some(0)).unwrap();
                    let poi = if i % 2 == 0 { a } else { b };
                    Event {
                        poi,
                        location: GeoPoint {
                            lat: 40.0 + 0.01 * poi as f64,
                            lon: -74.0,
                        },
                        ..Event::from_checkin(&c, poi)
                    }
                })
                .collect()
        })
        .collect();
    SplitCorpus::from_events(2, 10, sequences)
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let corpus = alternating_corpus();
    let cfg = ModelConfig::for_corpus(2, 10);
    let (model, mut params) = AnyModel::build(cfg, 1).expect("model builds");
    let opt = OptimizerConfig {
        learning_rate: 0.01,
        ..Default::default()
    };
    let mut progress = TrainProgress::default();
    let mut loss = f64::INFINITY;
    while progress.epochs_completed < OVERFIT_MAX_EPOCHS && loss >= OVERFIT_LOSS {
        loss = train_epoch(
            &model,
            &corpus,
            &mut params,
            &opt,
            &mut progress,
            1,
            &TrainOptions::default(),
        )
        .expect("finite training")
        .mean_loss;
    }
    let acc1 = evaluate(&model, &params, &corpus, EvalSplit::Train)
        .expect("predictions")
        .summary
        .acc1;
    let elapsed = start.elapsed();
    outcome(
        acc1 == 1.0 && loss < OVERFIT_LOSS && elapsed < OVERFIT_BUDGET,
        format!(
            "{} epochs, loss {loss:.4}, train Acc@1 {acc1}, {:.1}s",
            progress.epochs_completed,
            elapsed.as_secs_f64()
        ),
    )
}

struct AblationRun {
    seed: u64,
    variant: Variant,
    mrr: f64,
    sigma_day_night: Option<(f64, f64)>,
}

fn ablation_runs() -> (Vec<AblationRun>, Duration) {
    let start = Instant::now();
    let jobs: Vec<(u64, Variant)> = [1, 2, 3]
        .into_iter()
        .flat_map(|s| [Variant::Replay, Variant::NoSte, Variant::Flashback].map(|v| (s, v)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, variant)| {
            let corpus = synthetic_corpus(&SyntheticSpec {
                seed,
                ..Default::default()
            });
            let cfg = ModelConfig::for_corpus(corpus.user_count(), corpus.poi_count()).with_variant(variant);
            let (model, mut params) = AnyModel::build(cfg, seed).expect("model builds");
            train(&model, &mut params, &corpus, seed, ABLATION_EPOCHS, 0.01);
            let mrr = evaluate(&model, &params, &corpus, EvalSplit::Test)
                .expect("test split")
                .mrr();
            let sigma_day_night = (variant == Variant::Replay).then(|| {
                let bw = bandwidth_report(&model, &params).expect("bandwidths");
                (
                    mean_sigma_over_hours(&bw, data::is_daytime).unwrap(),
                    mean_sigma_over_hours(&bw, |h| !data::is_daytime(h)).unwrap(),
                )
            });
            AblationRun {
                seed,
                variant,
                mrr,
                sigma_day_night,
            }
        })
        .collect();
    (runs, start.elapsed())
}

fn ablation_ordering(runs: &[AblationRun], elapsed: Duration) -> Outcome {
    let med = |v: Variant| median(runs.iter().filter(|r| r.variant == v).map(|r| r.mrr).collect());
    let (replay, noste, flashback) = (med(Variant::Replay), med(Variant::NoSte), med(Variant::Flashback));
    let pass = replay > noste * (1.0 + ABLATION_MARGIN)
        && replay > flashback * (1.0 + ABLATION_MARGIN)
        && elapsed < ABLATION_BUDGET;
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("{}@{}={:.4}", r.variant, r.seed, r.mrr))
        .collect();
    outcome(
        pass,
        format!(
            "median test MRR replay {replay:.4}, noste {noste:.4}, flashback {flashback:.4}, {:.0}s [{}]",
            elapsed.as_secs_f64(),
            per_seed.join(" ")
        ),
    )
}

fn bandwidth_regularity(runs: &[AblationRun]) -> Outcome {
    let pairs: Vec<(f64, f64)> = runs.iter().filter_map(|r| r.sigma_day_night).collect();
    let day = median(pairs.iter().map(|p| p.0).collect());
    let night = median(pairs.iter().map(|p| p.1).collect());
    outcome(
        day < night,
        format!("median mean σ regular hours (6-18) {day:.4} vs irregular hours {night:.4}"),
    )
}

fn sort_oracle_rank(scores: &[f64], truth: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.iter().position(|&i| i == truth).unwrap() + 1
}

fn oracle_summary(ranks: &[usize]) -> [f64; 4] {
    let m = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / m;
    let acc = |n| ranks.iter().filter(|&&r| r <= n).count() as f64 / m;
    [mrr, acc(1), acc(5), acc(10)]
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    let mut ranks = Vec::new();
    let mut oracle_ranks = Vec::new();
    for _ in 0..1000 {
        let len = rng.random_range(1..60);
        let scores: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(0..4) as f64
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let truth = rng.random_range(0..len);
        let (r, o) = (rank_of_truth(&scores, truth), sort_oracle_rank(&scores, truth));
        mismatches += usize::from(r != o);
        ranks.push(r);
        oracle_ranks.push(o);
    }
    let s = RankSummary::from_ranks(&ranks);
    let o = oracle_summary(&oracle_ranks);
    let summary_matches = [s.mrr, s.acc1, s.acc5, s.acc10]
        .iter()
        .zip(o)
        .all(|(a, b)| (a - b).abs() < 1e-12);
    let worked = RankSummary::from_ranks(&[1, 2, 4]).mrr;

    // evaluate() against per-event predictions ranked by full sorting.
    let corpus = synthetic_corpus(&SyntheticSpec {
        user_count: 8,
        poi_count: 30,
        days: 30,
        seed: 4,
        ..Default::default()
    });
    let cfg = ModelConfig::for_corpus(corpus.user_count(), corpus.poi_count());
    let (model, mut params) = AnyModel::build(cfg, 4).expect("model builds");
    train(&model, &mut params, &corpus, 4, 3, 0.01);
    let report = evaluate(&model, &params, &corpus, EvalSplit::Test).expect("test split");
    let mut eval_ranks = Vec::new();
    for seq in &corpus.users {
        for t in seq.train_len.max(1)..seq.events.len() {
            let scores = predict_next(&model, &params, seq.user, &seq.events[..t], seq.events[t].local_time).unwrap();
            eval_ranks.push(sort_oracle_rank(&scores.logits, seq.events[t].poi));
        }
    }
    let e = oracle_summary(&eval_ranks);
    let got = [
        report.mrr(),
        report.summary.acc1,
        report.summary.acc5,
        report.summary.acc10,
    ];
    let eval_matches = eval_ranks.len() == report.prediction_count()
        && report.predictions.iter().map(|p| p.rank).eq(eval_ranks.iter().copied())
        && got.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-12);
    let monotone = [s.acc1, s.acc5, s.acc10].windows(2).all(|w| w[0] <= w[1])
        && got[1] <= got[2]
        && got[2] <= got[3]
        && got[1] <= got[0];
    outcome(
        mismatches == 0 && summary_matches && (worked - 7.0 / 12.0).abs() < MRR_TOL && eval_matches && monotone,
        format!(
            "{mismatches}/1000 rank mismatches, MRR{{1,2,4}} = {worked:.9}, evaluate() vs oracle on {} predictions: {}",
            eval_ranks.len(),
            if eval_matches { "equal" } else { "differ" }
        ),
    )
}

fn brute_force_returning(checkins: &[CheckIn], options: &ReturningOptions) -> Vec<f64> {
    let bins = (options.max_lag_hours / options.bin_width_hours) as usize + 1;
    let mut counts = vec![0u64; bins];
    for a in checkins {
        for b in checkins {
            if a.user_id != b.user_id || a.poi_id != b.poi_id {
                continue;
            }
            let lag_ms = (b.utc_time - a.utc_time).num_milliseconds();
            if lag_ms <= 0 || lag_ms as f64 > options.max_lag_hours * 3_600_000.0 {
                continue;
            }
            counts[(lag_ms as f64 / 3_600_000.0 / options.bin_width_hours).floor() as usize] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / checkins.len() as f64).collect()
}

fn returning_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t0 = DateTime::<Utc>::from_timestamp(1_672_650_000, 0).unwrap();
    let mut mismatched = 0;
    let trials = 40;
    for trial in 0..trials {
        let n = rng.random_range(1..=500);
        let users = rng.random_range(1..6);
        let pois = rng.random_range(1..12);
        let checkins: Vec<CheckIn> = (0..n)
            .map(|_| {
                let minutes = rng.random_range(0..60 * 24 * 21);
                CheckIn::new(
                    format!("u{}", rng.random_range(0..users)),
                    format!("p{}", rng.random_range(0..pois)),
                    t0 + chrono::Duration::minutes(minutes),
                    10.0,
                    20.0,
                    Some(0),
                )
                .unwrap()
            })
            .collect();
        let options = ReturningOptions {
            bin_width_hours: [1.0, 0.5, 3.0][trial % 3],
            max_lag_hours: 168.0,
            split_day_night: false,
        };
        let fast = returning_probability(&checkins, &options).overall;
        let slow = brute_force_returning(&checkins, &options);
        mismatched += usize::from(fast.iter().map(|x| x.to_bits()).ne(slow.iter().map(|x| x.to_bits())));
    }
    let regular = generate_synthetic(&SyntheticSpec {
        regularity: vec![0.9; 24],
        dayparts: 24,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let peak = returning_probability(&regular, &ReturningOptions::default())
        .argmax_lag_hours()
        .unwrap_or(f64::NAN);
    outcome(
        mismatched == 0 && (peak - 24.0).abs() <= 1.0,
        format!("{mismatched}/{trials} random corpora differ from brute force, high-regularity peak at {peak} h"),
    )
}

fn run_bytes(seed: u64) -> (Vec<u8>, Vec<u8>) {
    let corpus = synthetic_corpus(&SyntheticSpec {
        user_count: 10,
        poi_count: 40,
        days: 30,
        seed,
        ..Default::default()
    });
    let cfg = ModelConfig::for_corpus(corpus.user_count(), corpus.poi_count());
    let (model, mut params) = AnyModel::build(cfg.clone(), seed).expect("model builds");
    let opt = OptimizerConfig::default();
    let mut progress = TrainProgress::default();
    for _ in 0..3 {
        train_epoch(
            &model,
            &corpus,
            &mut params,
            &opt,
            &mut progress,
            seed,
            &TrainOptions::default(),
        )
        .unwrap();
    }
    let checkpoint = Checkpoint {
        seed,
        epochs_completed: progress.epochs_completed,
        optimizer_step: progress.optimizer_step,
        params: params.clone(),
    };
    let report = evaluate(&model, &params, &corpus, EvalSplit::Test).unwrap();
    let mut csv = Vec::new();
    write_metrics_csv(
        &mut csv,
        &[MetricsRow::new("replay", cfg.cell.to_string(), &report.summary)],
    )
    .unwrap();
    (checkpoint.to_bytes(), csv)
}

fn determinism() -> Outcome {
    let (a, b) = rayon::join(|| run_bytes(21), || run_bytes(21));
    let (other, _) = run_bytes(22);
    outcome(
        a == b && a.0 != other,
        format!(
            "checkpoint {} bytes identical: {}, metrics.csv identical: {}, other seed differs: {}",
            a.0.len(),
            a.0 == b.0,
            a.1 == b.1,
            a.0 != other
        ),
    )
}

fn variant_reduction() -> Outcome {
    let corpus = synthetic_corpus(&SyntheticSpec {
        user_count: 10,
        poi_count: 40,
        days: 30,
        seed: 31,
        ..Default::default()
    });
    let cfg = ModelConfig::for_corpus(corpus.user_count(), corpus.poi_count()).with_variant(Variant::Flashback);
    let (reduced, mut p1) = ReplayModel::build(cfg.clone(), 31).unwrap();
    let (dedicated, mut p2) = FlashbackModel::build(cfg, 31).unwrap();
    let opt = OptimizerConfig::default();
    let (mut g1, mut g2) = (TrainProgress::default(), TrainProgress::default());
    let mut max_diff = 0.0f64;
    for _ in 0..5 {
        let a = train_epoch(&reduced, &corpus, &mut p1, &opt, &mut g1, 31, &TrainOptions::default()).unwrap();
        let b = train_epoch(
            &dedicated,
            &corpus,
            &mut p2,
            &opt,
            &mut g2,
            31,
            &TrainOptions::default(),
        )
        .unwrap();
        max_diff = max_diff.max((a.mean_loss - b.mean_loss).abs());
    }
    outcome(
        max_diff == 0.0 && p1 == p2,
        format!(
            "5 epochs, max |Δ loss| = {max_diff:e}, final parameters identical: {}",
            p1 == p2
        ),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let (runs, ablation_time) = ablation_runs();
    let results = [
        ("1 gradient correctness", gradient_check()),
        ("2 flashback weight points", flashback_points()),
        ("3 cyclical distance laws", cyclical_laws()),
        ("4 smoothing limits", smoothing_limits()),
        ("5 overfit", overfit()),
        ("6 ablation ordering", ablation_ordering(&runs, ablation_time)),
        ("7 bandwidth regularity", bandwidth_regularity(&runs)),
        ("8 metric oracle", metric_oracle()),
        ("9 returning-probability oracle", returning_oracle()),
        ("10 determinism", determinism()),
        ("11 variant reduction", variant_reduction()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        println!(
            "[{}] criterion {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
