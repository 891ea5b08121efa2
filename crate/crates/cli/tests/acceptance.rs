//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines appear in `cargo test` output.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use confdiag::data::{split_per_student, Dataset, QEntry, ResponseLog, SplitSpec};
use confdiag::diagnostics::Variant;
use confdiag::latent::{kl_consensus, kl_standard, DropoutConfig, PriorConsensus};
use confdiag::metrics::{acc, auc, calibration, rmse, spearman, ScoredPair};
use confdiag::model::{Dims, Model, ModelConfig};
use confdiag::numerics::{grad_check, stable_sigmoid, GradCheckOptions};
use confdiag::rng::{seeded, stream, Stream};
use confdiag::synthetic::{generate, SyntheticData, SyntheticSpec};
use confdiag::training::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration, detail: String) -> Outcome {
    check(
        elapsed <= budget,
        format!("{detail}; {:.1}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64()),
    )
}

// 1 ---------------------------------------------------------------------

fn mc_kl(mean: &[f64], var: &[f64], prior: &[f64], samples: usize, rng: &mut impl Rng) -> f64 {
    let mut total = 0.0;
    for _ in 0..samples {
        for l in 0..mean.len() {
            let e: f64 = StandardNormal.sample(rng);
            let z = mean[l] + var[l].sqrt() * e;
            let log_q = -0.5 * var[l].ln() - (z - mean[l]).powi(2) / (2.0 * var[l]);
            let log_p = -(z - prior[l]).powi(2) / 2.0;
            total += log_q - log_p;
        }
    }
    total / samples as f64
}

fn kl_monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=5);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..2.0)).collect();
        let prior: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zero = vec![0.0; d];
        let a = (kl_standard(&mean, &var) - mc_kl(&mean, &var, &zero, 1_000_000, &mut rng)).abs();
        let p = PriorConsensus { mean: prior.clone() };
        let b = (kl_consensus(&mean, &var, &p) - mc_kl(&mean, &var, &prior, 1_000_000, &mut rng)).abs();
        worst = worst.max(a).max(b);
    }
    let detail = format!("max |closed form - MC| = {worst:.2e} (< 1e-2)");
    check(worst < 1e-2, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(30), detail)
}

// 2 ---------------------------------------------------------------------

fn toy_data() -> (SyntheticData, Dataset) {
    let data = generate(&SyntheticSpec {
        students: 20,
        exercises: 30,
        concepts: 8,
        logs_per_student: 25,
        seed: 5,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let ds = Dataset::build(&data.logs, &data.q).unwrap();
    (data, ds)
}

fn dims_of(ds: &Dataset) -> Dims {
    Dims {
        students: ds.n_students(),
        exercises: ds.n_exercises(),
        concepts: ds.n_concepts(),
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (_, ds) = toy_data();
    let mut rng = seeded(202);
    let mut summary = Vec::new();
    let mut ok = true;
    for variant in [Variant::Irt, Variant::Mirt, Variant::Ncd] {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let cfg = ModelConfig {
                ncd_hidden: [64, 32],
                ..ModelConfig::with_variant(variant)
            };
            let mut model = Model::new(cfg, dims_of(&ds), &mut seeded(rng.random())).unwrap();
            let d = model.dim();
            let b = rng.random_range(2..=16);
            let batch: Vec<usize> = (0..b).map(|_| rng.random_range(0..ds.interactions.len())).collect();
            let mut dropout_rng = seeded(rng.random());
            let mut noise = BatchNoise::draw(b, d, &DropoutConfig::default(), &mut rng, &mut dropout_rng);
            noise.pairs = (0..b)
                .map(|_| {
                    let a = rng.random_range(0..b);
                    CalibrationPair {
                        a: (a, rng.random_range(0..d)),
                        b: ((a + rng.random_range(1..b)) % b, rng.random_range(0..d)),
                        o_a: rng.random(),
                        o_b: rng.random(),
                    }
                })
                .collect();
            let prior = PriorConsensus {
                mean: (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
            };
            let settings = LossSettings {
                gamma: 1e-4,
                beta: 0.1,
                alpha: 0.5,
                mode: CalibrationMode::AssumptionConsistent,
                kl_dedup: false,
            };
            let mut store = model.store().clone();
            let report = grad_check(
                |st| {
                    std::mem::swap(model.store_mut(), st);
                    let l = batch_loss(&mut model, &ds, &batch, &prior, &settings, &noise).unwrap().0.total;
                    std::mem::swap(model.store_mut(), st);
                    l
                },
                &mut store,
                &GradCheckOptions::default(),
            )
            .unwrap();
            worst = worst.max(report.max_relative_error);
        }
        ok &= worst < 1e-4;
        summary.push(format!("{variant} {worst:.1e}"));
    }
    let detail = format!("max relative error over 20 batches: {} (< 1e-4)", summary.join(", "));
    check(ok, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(120), detail)
}

// 3 ---------------------------------------------------------------------

fn hand_hinge(va: f64, vb: f64, oa: f64, ob: f64, literal: bool) -> f64 {
    let mut g = 0.0;
    if oa > ob {
        g = 1.0;
    }
    if oa < ob {
        g = -1.0;
    }
    if literal {
        g = -g;
    }
    let x = g * (va - vb) + (oa - ob).abs();
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn calibration_oracle() -> Outcome {
    let mut rng = seeded(303);
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut worst: f64 = 0.0;
    let mut ties_ok = true;
    let mut symmetric = true;
    for case in 0..1000 {
        let va = rng.random_range(0.01..3.0);
        let vb = rng.random_range(0.01..3.0);
        // every fifth case draws frequencies from a coarse grid to force ties
        let (oa, ob) = if case % 5 == 0 {
            (levels[rng.random_range(0..5)], levels[rng.random_range(0..5)])
        } else {
            (rng.random::<f64>(), rng.random::<f64>())
        };
        for (mode, literal) in [(CalibrationMode::AssumptionConsistent, false), (CalibrationMode::LiteralEq12, true)] {
            let got = calibration_pair_loss(va, vb, oa, ob, mode);
            worst = worst.max((got - hand_hinge(va, vb, oa, ob, literal)).abs());
            symmetric &= got == calibration_pair_loss(vb, va, ob, oa, mode);
            if oa == ob {
                ties_ok &= got == 0.0;
            }
        }
    }
    check(
        worst < 1e-12 && ties_ok && symmetric,
        format!("max deviation {worst:.1e} (< 1e-12), ties exactly 0: {ties_ok}, swap-symmetric: {symmetric}"),
    )
}

// 4 ---------------------------------------------------------------------

fn brute_bin(p: f64, m: usize) -> usize {
    (1..=m)
        .find(|&n| p <= n as f64 / m as f64)
        .unwrap_or(m)
}

fn metric_oracle() -> Outcome {
    let mut rng = seeded(404);
    let pairs: Vec<ScoredPair> = (0..500)
        .map(|i| {
            // a few exact bin edges and the 0.5 threshold
            let p = match i % 50 {
                0 => 0.5,
                1 => 0.3,
                2 => 0.0,
                3 => 1.0,
                _ => rng.random(),
            };
            ScoredPair::new(p, u8::from(rng.random::<f64>() < p))
        })
        .collect();
    let n = pairs.len() as f64;
    let correct = |p: &ScoredPair| (p.prob >= 0.5) == (p.label == 1);
    let b_acc = pairs.iter().filter(|p| correct(p)).count() as f64 / n;
    let b_rmse = (pairs.iter().map(|p| (p.prob - f64::from(p.label)).powi(2)).sum::<f64>() / n).sqrt();
    let (mut wins, mut comparisons) = (0.0, 0.0);
    for a in pairs.iter().filter(|p| p.label == 1) {
        for b in pairs.iter().filter(|p| p.label == 0) {
            comparisons += 1.0;
            if a.prob > b.prob {
                wins += 1.0;
            } else if a.prob == b.prob {
                wins += 0.5;
            }
        }
    }
    let b_auc = wins / comparisons;
    let m = 10;
    let (mut b_ece, mut b_mce): (f64, f64) = (0.0, 0.0);
    for bin in 1..=m {
        let members: Vec<&ScoredPair> = pairs.iter().filter(|p| brute_bin(p.prob, m) == bin).collect();
        if members.is_empty() {
            continue;
        }
        let k = members.len() as f64;
        let acc_b = members.iter().filter(|p| correct(p)).count() as f64 / k;
        let avg_b = members.iter().map(|p| p.prob).sum::<f64>() / k;
        b_ece += k / n * (acc_b - avg_b).abs();
        b_mce = b_mce.max((acc_b - avg_b).abs());
    }
    let cal = calibration(&pairs, m).unwrap();
    let diffs = [
        (acc(&pairs).unwrap() - b_acc).abs(),
        (rmse(&pairs).unwrap() - b_rmse).abs(),
        (auc(&pairs).unwrap() - b_auc).abs(),
        (cal.ece - b_ece).abs(),
        (cal.mce - b_mce).abs(),
    ];
    let worst = diffs.iter().copied().fold(0.0, f64::max);

    let mut violations = 0;
    for _ in 0..10_000 {
        let size = rng.random_range(1..60);
        let bins = rng.random_range(1..20);
        let set: Vec<ScoredPair> = (0..size)
            .map(|_| ScoredPair::new(rng.random(), rng.random_range(0..=1)))
            .collect();
        let r = calibration(&set, bins).unwrap();
        if r.ece > r.mce {
            violations += 1;
        }
    }
    check(
        worst < 1e-10 && violations == 0,
        format!("max deviation from brute force {worst:.1e} (< 1e-10); ECE > MCE in {violations} of 10000 inputs"),
    )
}

// 5, 6, 7 ----------------------------------------------------------------

struct RecoveryRun {
    data: SyntheticData,
    ds: Dataset,
    counts: Vec<u32>,
    outcome: TrainOutcome,
    final_model: Model,
    final_tracker: CorrectnessTracker,
    elapsed: Duration,
}

fn recovery_run(beta: f64) -> RecoveryRun {
    let start = Instant::now();
    let data = generate(&SyntheticSpec::default()).unwrap();
    let ds = Dataset::build(&data.logs, &data.q).unwrap();
    let split = split_per_student(&ds, &SplitSpec::default()).unwrap();
    let cfg = TrainConfig {
        beta,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(&ds, &split, ModelConfig::with_variant(Variant::Mirt), cfg).unwrap();
    while !t.phase_done() {
        t.run_epoch().unwrap();
    }
    t.start_main_phase().unwrap();
    while !t.phase_done() {
        t.run_epoch().unwrap();
    }
    let final_model = t.model().clone();
    let final_tracker = t.tracker().clone();
    let outcome = t.finish().unwrap();
    let counts = ds.concept_counts(&split.train);
    RecoveryRun {
        data,
        ds,
        counts,
        outcome,
        final_model,
        final_tracker,
        elapsed: start.elapsed(),
    }
}

fn true_index(id: &str) -> usize {
    id[1..].parse().unwrap()
}

fn ability_recovery(run: &RecoveryRun) -> Outcome {
    let (ds, k) = (&run.ds, run.ds.n_concepts());
    let mean = run.outcome.model.student_means();
    let mut total = 0.0;
    for l in 0..k {
        let truth_col = true_index(ds.concepts.id(l));
        let est: Vec<f64> = (0..ds.n_students()).map(|i| stable_sigmoid(mean.get(i, l))).collect();
        let truth: Vec<f64> = (0..ds.n_students())
            .map(|i| run.data.abilities.get(true_index(ds.students.id(i)), truth_col))
            .collect();
        total += spearman(&est, &truth).unwrap();
    }
    let rho = total / k as f64;
    let detail = format!("mean per-concept Spearman {rho:.3} (>= 0.5)");
    check(rho >= 0.5, detail.clone())?;
    within(run.elapsed, Duration::from_secs(300), detail)
}

fn uncertainty_evidence(run: &RecoveryRun) -> Outcome {
    let k = run.ds.n_concepts();
    let log_var = run.final_model.student_log_vars();
    let (mut dense, mut sparse) = (Vec::new(), Vec::new());
    for i in 0..run.ds.n_students() {
        for l in 0..k {
            let v = log_var.get(i, l).exp();
            match run.counts[i * k + l] {
                c if c >= 20 => dense.push(v),
                c if c <= 2 => sparse.push(v),
                _ => {}
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&dense), mean(&sparse));
    check(
        !dense.is_empty() && !sparse.is_empty() && a < b,
        format!(
            "mean variance {a:.4} over {} cells with >= 20 logs vs {b:.4} over {} cells with <= 2",
            dense.len(),
            sparse.len()
        ),
    )
}

fn frequency_variance_correlation(run: &RecoveryRun) -> f64 {
    let log_var = run.final_model.student_log_vars();
    let (mut o, mut v) = (Vec::new(), Vec::new());
    for i in 0..run.ds.n_students() {
        for l in 0..run.ds.n_concepts() {
            if let Some(f) = run.final_tracker.frequency(i, l) {
                o.push(f);
                v.push(log_var.get(i, l).exp());
            }
        }
    }
    spearman(&o, &v).unwrap()
}

fn calibration_ordering(with: &RecoveryRun, without: &RecoveryRun) -> Outcome {
    let a = frequency_variance_correlation(with);
    let b = frequency_variance_correlation(without);
    check(
        a <= -0.2 && b.abs() < a.abs(),
        format!("Spearman(o, variance) {a:.3} with beta=0.1 (<= -0.2), {b:.3} with beta=0 (smaller magnitude)"),
    )
}

// 8 ---------------------------------------------------------------------

fn reductions() -> Outcome {
    let (_, ds) = toy_data();
    let split = split_per_student(&ds, &SplitSpec::default()).unwrap();
    let model_cfg = ModelConfig {
        ncd_hidden: [32, 16],
        ..ModelConfig::with_variant(Variant::Ncd)
    };

    // zero weights, no dropout: each batch's loss is plain mean BCE
    let cfg = TrainConfig {
        gamma: 0.0,
        beta: 0.0,
        dropout: DropoutConfig {
            enabled: false,
            ..DropoutConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(&ds, &split, model_cfg, cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut order_rng = seeded(808);
    for phase in 0..2 {
        if phase == 1 {
            t.start_main_phase().unwrap();
        }
        for _ in 0..3 {
            for batch in confdiag::data::batches(&split.train, 32, &mut order_rng).unwrap() {
                let r = t.train_batch(&batch).unwrap();
                let bce = batch
                    .iter()
                    .zip(&r.probs)
                    .map(|(&i, &y)| {
                        let y = y.clamp(1e-12, 1.0 - 1e-12);
                        if ds.interactions[i].score == 1 {
                            -y.ln()
                        } else {
                            -(1.0 - y).ln()
                        }
                    })
                    .sum::<f64>()
                    / batch.len() as f64;
                worst = worst.max((r.loss.total - bce).abs());
            }
        }
    }

    // no epochs: initialization plus the mean of the initial ability means
    let cfg = TrainConfig {
        pretrain_epochs: 0,
        max_epochs: 0,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&ds, &split, model_cfg, cfg).unwrap();
    let init = Model::new(model_cfg, dims_of(&ds), &mut stream(3, Stream::Init)).unwrap();
    let same_params = out.model.named_params().eq(init.named_params());
    let means = init.student_means();
    let consensus: Vec<f64> = (0..means.cols())
        .map(|l| (0..means.rows()).map(|i| means.get(i, l)).sum::<f64>() / means.rows() as f64)
        .collect();
    let consensus_gap = out
        .consensus
        .mean
        .iter()
        .zip(&consensus)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // fixed seed twice
    let cfg = TrainConfig {
        pretrain_epochs: 3,
        max_epochs: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = Checkpoint::new(&train(&ds, &split, model_cfg, cfg).unwrap(), &ds, cfg, None);
    let b = Checkpoint::new(&train(&ds, &split, model_cfg, cfg).unwrap(), &ds, cfg, None);
    let identical = a.to_bytes().unwrap() == b.to_bytes().unwrap();

    check(
        worst < 1e-12 && same_params && consensus_gap < 1e-12 && identical,
        format!(
            "loss - mean BCE max {worst:.1e} (< 1e-12); zero-epoch params equal init: {same_params}, consensus gap {consensus_gap:.1e}; repeated runs bit-identical: {identical}"
        ),
    )
}

// 9 ---------------------------------------------------------------------

const ASSIST_ENV: &str = "CONFDIAG_ASSIST2009";

/// Reads the public skill-builder export: first attempt per (user, problem),
/// rows without a skill dropped, every skill of a problem kept in the Q-matrix.
fn read_assist(path: &Path) -> (Vec<ResponseLog>, Vec<QEntry>) {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).unwrap();
    let header = reader.byte_headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name.as_bytes()).unwrap_or_else(|| panic!("column {name}"));
    let (user, problem, skill, correct) = (col("user_id"), col("problem_id"), col("skill_id"), col("correct"));
    let text = |r: &csv::ByteRecord, i: usize| String::from_utf8_lossy(&r[i]).trim().to_owned();
    let mut seen = std::collections::HashSet::new();
    let mut q_seen = std::collections::HashSet::new();
    let (mut logs, mut q) = (Vec::new(), Vec::new());
    for rec in reader.byte_records() {
        let r = rec.unwrap();
        let (u, p, s) = (text(&r, user), text(&r, problem), text(&r, skill));
        if s.is_empty() {
            continue;
        }
        if q_seen.insert((p.clone(), s.clone())) {
            q.push(QEntry::new(p.clone(), s));
        }
        if seen.insert((u.clone(), p.clone())) {
            let score = u8::from(text(&r, correct) == "1");
            logs.push(ResponseLog::new(u, p, score));
        }
    }
    (logs, q)
}

fn assist_reproduction() -> Outcome {
    let path = std::env::var(ASSIST_ENV).map_err(|_| format!("{ASSIST_ENV} not set"))?;
    let start = Instant::now();
    let (logs, q) = read_assist(Path::new(&path));
    let logs = confdiag::data::filter_students(&logs, 15);
    let ds = Dataset::build(&logs, &q).unwrap();
    let split = split_per_student(&ds, &SplitSpec::default()).unwrap();
    let out = train(&ds, &split, ModelConfig::default(), TrainConfig::default()).unwrap();
    let report = evaluate(&out.model, &ds, &split.test, 10).unwrap();
    let auc = report.auc.unwrap_or(0.0) * 100.0;
    let ece = report.ece * 100.0;
    let detail = format!(
        "{} students, {} exercises, {} concepts; test AUC {auc:.2} (>= 73.0), ECE {ece:.2}% (<= 3.5)",
        ds.n_students(),
        ds.n_exercises(),
        ds.n_concepts()
    );
    check(auc >= 73.0 && ece <= 3.5, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(45 * 60), detail)
}

// 10 --------------------------------------------------------------------

fn pipeline_integrity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let bytes = std::fs::read(&ckpt).unwrap();
    let loaded = Checkpoint::from_bytes(&bytes).unwrap();
    let resaved = dir.path().join("again.json");
    loaded.save(&resaved).unwrap();
    let round_trip = std::fs::read(&resaved).unwrap() == bytes;

    let data = generate(&SyntheticSpec::default()).unwrap();
    let ds = Dataset::build(&data.logs, &data.q).unwrap();
    let mut partition_failures = 0;
    for seed in 0..50 {
        let s = split_per_student(&ds, &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        if all != (0..ds.interactions.len()).collect::<Vec<_>>() {
            partition_failures += 1;
        }
    }

    let c = ckpt.to_str().unwrap();
    let r = confdiag(&["eval", "--checkpoint", c, "--split", "test"]);
    let (_, rows) = read_csv(&dir.path().join("run/predictions_test.csv"));
    let pairs: Vec<ScoredPair> = rows
        .iter()
        .map(|r| ScoredPair::new(r[3].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    let gap = (printed(&r.stdout, "ECE") - calibration(&pairs, 10).unwrap().ece).abs();

    check(
        round_trip && partition_failures == 0 && gap < 1e-9,
        format!(
            "save-load-save identical: {round_trip}; split not a partition for {partition_failures} of 50 seeds; eval ECE vs CSV recomputation {gap:.1e} (< 1e-9)"
        ),
    )
}

// -----------------------------------------------------------------------

fn run(id: &str, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(d) => println!("PASS  criterion {id:>2} {name}: {d} [{secs:.1}s]"),
        Err(d) => println!("FAIL  criterion {id:>2} {name}: {d} [{secs:.1}s]"),
    }
    result.is_ok()
}

fn main() {
    // quiet the default hook; failures are reported on the criterion line
    std::panic::set_hook(Box::new(|_| {}));
    let mut passed = Vec::new();
    passed.push(run("1", "KL closed forms vs Monte Carlo", kl_monte_carlo));
    passed.push(run("2", "gradient fidelity of the full objective", gradient_fidelity));
    passed.push(run("3", "calibration loss oracle", calibration_oracle));
    passed.push(run("4", "metric oracle equivalence", metric_oracle));
    let with = recovery_run(0.1);
    let without = recovery_run(0.0);
    passed.push(run("5", "synthetic ability recovery", || ability_recovery(&with)));
    passed.push(run("6", "uncertainty shrinks with evidence", || uncertainty_evidence(&with)));
    passed.push(run("7", "calibration ordering", || calibration_ordering(&with, &without)));
    passed.push(run("8", "training reductions", reductions));
    let assist_ran = std::env::var(ASSIST_ENV).is_ok();
    let assist = if assist_ran {
        run("9", "Assist2009 reproduction", assist_reproduction)
    } else {
        println!(
            "SKIP  criterion  9 Assist2009 reproduction: NOT RUN, dataset unavailable offline; set {ASSIST_ENV} to skill_builder_data.csv"
        );
        false
    };
    passed.push(run("10", "pipeline integrity", pipeline_integrity));

    let failed = passed.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed, criterion 9 {}",
        passed.len() - failed,
        if assist_ran { if assist { "passed" } else { "failed" } } else { "not run" }
    );
    if failed > 0 || (assist_ran && !assist) {
        std::process::exit(1);
    }
}
