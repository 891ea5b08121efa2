//! Browser bindings. Every export returns a JSON string so the page can stay
//! plain JavaScript.

use confdiag::data::{split_per_student, Dataset, SplitSpec};
use confdiag::diagnostics::{predict_irt, Variant};
use confdiag::metrics::{calibration, spearman, ScoredPair};
use confdiag::model::ModelConfig;
use confdiag::numerics::stable_sigmoid;
use confdiag::synthetic::{generate, SyntheticSpec};
use confdiag::training::{train, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const IRT_SCALE: f64 = 1.702;

#[derive(Serialize)]
struct Curve {
    theta: Vec<f64>,
    prob: Vec<f64>,
    /// Probability at mean - 2 sd, mean, mean + 2 sd.
    band: [f64; 3],
}

pub fn response_curve_json(difficulty: f64, mean: f64, sd: f64, points: usize) -> Result<String, String> {
    if !(sd >= 0.0) || !difficulty.is_finite() || !mean.is_finite() || points < 2 {
        return Err("need finite difficulty and mean, sd >= 0 and at least 2 points".into());
    }
    let theta: Vec<f64> = (0..points)
        .map(|i| -4.0 + 8.0 * i as f64 / (points - 1) as f64)
        .collect();
    let p = |t: f64| predict_irt(t, difficulty, 1.0, IRT_SCALE);
    let curve = Curve {
        prob: theta.iter().map(|&t| p(t)).collect(),
        theta,
        band: [p(mean - 2.0 * sd), p(mean), p(mean + 2.0 * sd)],
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

pub fn reliability_json(probs: &[f64], labels: &[u8], bins: usize) -> Result<String, String> {
    if probs.len() != labels.len() {
        return Err(format!("{} probabilities but {} labels", probs.len(), labels.len()));
    }
    let pairs: Vec<ScoredPair> = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| ScoredPair::new(p, y))
        .collect();
    let report = calibration(&pairs, bins).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Cell {
    logs: u32,
    variance: f64,
    mastery: f64,
    truth: f64,
}

#[derive(Serialize)]
struct EvidenceRun {
    cells: Vec<Cell>,
    recovery: Option<f64>,
    validation_auc: Option<f64>,
    validation_ece: f64,
}

/// Trains MIRT on a small synthetic cohort and reports, for every
/// (student, concept), the training evidence and the learned variance.
pub fn evidence_json(seed: u64, beta: f64, epochs: usize) -> Result<String, String> {
    let spec = SyntheticSpec {
        students: 60,
        exercises: 120,
        concepts: 5,
        logs_per_student: 40,
        seed,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let ds = Dataset::build(&data.logs, &data.q).map_err(|e| e.to_string())?;
    let split = split_per_student(&ds, &SplitSpec { seed, ..SplitSpec::default() }).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        beta,
        seed,
        pretrain_epochs: epochs,
        max_epochs: epochs,
        batch_size: 16,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let out = train(&ds, &split, ModelConfig::with_variant(Variant::Mirt), cfg).map_err(|e| e.to_string())?;

    let k = ds.n_concepts();
    let counts = ds.concept_counts(&split.train);
    let (mean, log_var) = (out.model.student_means(), out.model.student_log_vars());
    let index = |id: &str| id[1..].parse::<usize>().unwrap_or(0);
    let mut cells = Vec::with_capacity(ds.n_students() * k);
    for i in 0..ds.n_students() {
        for l in 0..k {
            cells.push(Cell {
                logs: counts[i * k + l],
                variance: log_var.get(i, l).exp(),
                mastery: stable_sigmoid(mean.get(i, l)),
                truth: data
                    .abilities
                    .get(index(ds.students.id(i)), index(ds.concepts.id(l))),
            });
        }
    }
    let est: Vec<f64> = cells.iter().map(|c| c.mastery).collect();
    let truth: Vec<f64> = cells.iter().map(|c| c.truth).collect();
    let run = EvidenceRun {
        recovery: spearman(&est, &truth),
        validation_auc: out.validation.auc,
        validation_ece: out.validation.ece,
        cells,
    };
    serde_json::to_string(&run).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn response_curve(difficulty: f64, mean: f64, sd: f64, points: usize) -> Result<String, JsValue> {
    response_curve_json(difficulty, mean, sd, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn reliability_diagram(probs: &[f64], labels: &[u8], bins: usize) -> Result<String, JsValue> {
    reliability_json(probs, labels, bins).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn evidence_demo(seed: u64, beta: f64, epochs: usize) -> Result<String, JsValue> {
    evidence_json(seed, beta, epochs).map_err(|e| JsValue::from_str(&e))
}
