mod common;

use std::collections::{HashMap, HashSet};

use common::*;
use confdiag::data::{split_per_student, SplitSpec};
use confdiag::metrics::{calibration, ScoredPair};
use confdiag::training::Checkpoint;
use confdiag_cli::commands::load_dataset;

#[test]
fn train_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    assert!(ckpt.is_file());
    let (header, rows) = read_csv(&dir.path().join("run/train_log.csv"));
    assert_eq!(header[..6], ["epoch", "phase", "l_pred", "l_kl", "l_rl", "l_total"]);
    assert!(rows.len() >= 2);
    let resolved = std::fs::read_to_string(dir.path().join("run/resolved_config.txt")).unwrap();
    assert!(resolved.contains("beta = 0.1"));
    assert!(resolved.contains("variant = mirt"));
}

#[test]
fn bundled_config_parses() {
    let cfg = confdiag_cli::config::RunConfig::load(fixture("toy.conf")).unwrap();
    assert!(cfg.logs.is_file());
}

#[test]
fn negative_beta_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "beta = -1\n");
    let r = confdiag(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("beta"), "{}", r.stderr);
    assert!(!dir.path().join("run").exists());
}

#[test]
fn every_config_problem_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "gamma = -1\nbatch_size = 1\nnonsense = 2\n");
    let r = confdiag(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    for needle in ["gamma", "batch_size", "nonsense"] {
        assert!(r.stderr.contains(needle), "{needle}: {}", r.stderr);
    }
}

#[test]
fn usage_errors_are_validation_errors() {
    assert_eq!(confdiag(&["eval", "--split", "train"]).code, 1);
    assert_eq!(confdiag(&["eval", "--checkpoint", "x", "--split", "holdout"]).code, 1);
    assert_eq!(confdiag(&["--help"]).code, 0);
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = trained(a.path());
    let cb = trained(b.path());
    let ea = confdiag(&["eval", "--checkpoint", ca.to_str().unwrap(), "--split", "val"]);
    let eb = confdiag(&["eval", "--checkpoint", cb.to_str().unwrap(), "--split", "val"]);
    let metrics = |s: &str| s.lines().filter(|l| !l.starts_with("predictions")).collect::<Vec<_>>().join("\n");
    assert_eq!(metrics(&ea.stdout), metrics(&eb.stdout));
    for f in ["train_log.csv", "predictions_val.csv"] {
        assert_eq!(
            std::fs::read(a.path().join("run").join(f)).unwrap(),
            std::fs::read(b.path().join("run").join(f)).unwrap(),
            "{f}"
        );
    }
    let pa = Checkpoint::load(&ca).unwrap();
    let pb = Checkpoint::load(&cb).unwrap();
    assert_eq!(pa.params, pb.params);
    assert_eq!(pa.validation, pb.validation);
}

#[test]
fn eval_beats_majority_on_train_split() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let r = confdiag(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "train"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = read_csv(&dir.path().join("run/predictions_train.csv"));
    assert_eq!(header, ["student_id", "exercise_id", "label", "prob"]);
    let positives = rows.iter().filter(|r| r[2] == "1").count() as f64 / rows.len() as f64;
    let majority = positives.max(1.0 - positives);
    assert!(printed(&r.stdout, "ACC") > majority);
    assert!(rows.iter().all(|r| r[3].split('.').nth(1).is_some_and(|d| d.len() == 6)));

    // row count equals the split size
    let ck = Checkpoint::load(&ckpt).unwrap();
    let src = ck.data.unwrap();
    let ds = load_dataset(src.logs.as_ref(), src.q_matrix.as_ref(), src.min_logs).unwrap();
    let split = split_per_student(&ds, &src.split).unwrap();
    assert_eq!(rows.len(), split.train.len());
}

#[test]
fn eval_ece_matches_its_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    for split in ["train", "val", "test"] {
        let r = confdiag(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", split]);
        let (_, rows) = read_csv(&dir.path().join(format!("run/predictions_{split}.csv")));
        let pairs: Vec<ScoredPair> = rows
            .iter()
            .map(|r| ScoredPair::new(r[3].parse().unwrap(), r[2].parse().unwrap()))
            .collect();
        let ece = calibration(&pairs, 10).unwrap().ece;
        assert!((printed(&r.stdout, "ECE") - ece).abs() < 1e-9);
    }
}

#[test]
fn untrained_constant_predictor_has_half_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "pretrain_epochs = 0\nmax_epochs = 0\n");
    assert_eq!(confdiag(&["train", "--config", cfg.to_str().unwrap()]).code, 0);
    let path = dir.path().join("run/checkpoint.json");
    let mut ck = Checkpoint::load(&path).unwrap();
    for p in &mut ck.params {
        if p.name == "student_mean" || p.name == "exercise_difficulty" {
            p.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    ck.save(&path).unwrap();
    let r = confdiag(&["eval", "--checkpoint", path.to_str().unwrap(), "--split", "test"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(printed(&r.stdout, "RMSE"), 0.5);
}

#[test]
fn diagnose_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let r = confdiag(&["diagnose", "--checkpoint", ckpt.to_str().unwrap(), "--student", "s0003"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("sigmoid(mean)"));
    let (header, rows) = read_csv(&dir.path().join("run/diagnosis_s0003.csv"));
    assert_eq!(header, confdiag_cli::commands::DIAGNOSIS_HEADER);
    assert_eq!(rows.len(), 8);
    let mut ranks: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let sigmas: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(sigmas.windows(2).all(|w| w[0] <= w[1]));
    assert!(sigmas.iter().all(|&s| s > 0.0));
    assert!(rows.iter().all(|r| {
        let m: f64 = r[2].parse().unwrap();
        m > 0.0 && m < 1.0
    }));
    ranks.sort_unstable();
    assert_eq!(ranks, (1..=8).collect::<Vec<_>>());
}

#[test]
fn diagnose_unknown_student() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let r = confdiag(&["diagnose", "--checkpoint", ckpt.to_str().unwrap(), "--student", "nobody"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("nobody"));
}

#[test]
fn export_ability_matches_training_logs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let r = confdiag(&["export-ability", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = read_csv(&dir.path().join("run/ability.csv"));
    assert_eq!(header, ["student_id", "concept_id", "mastery", "sigma", "interacted"]);
    assert_eq!(rows.len(), 160);
    assert!(rows.iter().all(|r| {
        let m: f64 = r[2].parse().unwrap();
        m > 0.0 && m < 1.0
    }));

    // recount from the raw files: which training logs touch which concepts
    let (_, q) = read_csv(&fixture("q_matrix.csv"));
    let mut concepts: HashMap<String, Vec<String>> = HashMap::new();
    for r in q {
        concepts.entry(r[0].clone()).or_default().push(r[1].clone());
    }
    let ck = Checkpoint::load(&ckpt).unwrap();
    let src = ck.data.unwrap();
    let ds = load_dataset(src.logs.as_ref(), src.q_matrix.as_ref(), src.min_logs).unwrap();
    let split = split_per_student(&ds, &SplitSpec { seed: 7, ..SplitSpec::default() }).unwrap();
    let mut touched = HashSet::new();
    for &i in &split.train {
        let it = ds.interactions[i];
        for c in &concepts[ds.exercises.id(it.exercise)] {
            touched.insert((ds.students.id(it.student).to_owned(), c.clone()));
        }
    }
    for r in &rows {
        let expect = touched.contains(&(r[0].clone(), r[1].clone()));
        assert_eq!(r[4] == "1", expect, "{r:?}");
    }
}

#[test]
fn reliability_export_agrees_with_eval() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let c = ckpt.to_str().unwrap();
    let eval = confdiag(&["eval", "--checkpoint", c, "--split", "test"]);
    let r = confdiag(&["export-reliability", "--checkpoint", c, "--split", "test", "--bins", "10"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = read_csv(&dir.path().join("run/reliability_test.csv"));
    assert_eq!(header, ["bin", "lo", "hi", "count", "acc", "avg_prob", "gap"]);
    assert_eq!(rows.len(), 10);
    let total: f64 = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    let ece: f64 = rows
        .iter()
        .filter(|r| !r[6].is_empty())
        .map(|r| r[3].parse::<f64>().unwrap() / total * r[6].parse::<f64>().unwrap())
        .sum();
    assert!((ece - printed(&eval.stdout, "ECE")).abs() < 1e-9);

    let out = dir.path().join("one.csv");
    let r = confdiag(&["export-reliability", "--checkpoint", c, "--split", "test", "--bins", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0);
    let (_, rows) = read_csv(&out);
    assert_eq!(rows.len(), 1);
    let f = |i: usize| rows[0][i].parse::<f64>().unwrap();
    assert!((f(6) - (f(4) - f(5)).abs()).abs() < 1e-11);
}

#[test]
fn outputs_are_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let c = ckpt.to_str().unwrap();
    let mut first = Vec::new();
    for round in 0..2 {
        let a = dir.path().join(format!("a{round}.csv"));
        let d = dir.path().join(format!("d{round}.csv"));
        confdiag(&["export-ability", "--checkpoint", c, "--out", a.to_str().unwrap()]);
        confdiag(&["diagnose", "--checkpoint", c, "--student", "s0001", "--out", d.to_str().unwrap()]);
        let bytes = (std::fs::read(a).unwrap(), std::fs::read(d).unwrap());
        if round == 0 {
            first.push(bytes);
        } else {
            assert_eq!(first[0], bytes);
        }
    }
}

#[test]
fn corrupt_checkpoint_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"format_version\": 1}").unwrap();
    let r = confdiag(&["eval", "--checkpoint", p.to_str().unwrap(), "--split", "test"]);
    assert_eq!(r.code, 1);
}
