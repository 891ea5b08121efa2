//! Loss terms of the training objective and the noise they consume.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::CorrectnessTracker;
use crate::data::Dataset;
use crate::diagnostics::predict_nodes;
use crate::latent::{latent_nodes, DropoutConfig, PriorConsensus};
use crate::model::Model;
use crate::numerics::{Matrix, Tape, LOG_FLOOR};
use crate::{Error, Result};

/// Which sign the variance difference takes inside the calibration hinge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// `max(0, g * (var_a - var_b) + |o_a - o_b|)`: cells predicted correctly
    /// more often are pushed toward smaller variance.
    #[default]
    AssumptionConsistent,
    /// `max(0, -g * (var_a - var_b) + |o_a - o_b|)`.
    LiteralEq12,
}

impl CalibrationMode {
    fn coefficient(self, g: f64) -> f64 {
        match self {
            CalibrationMode::AssumptionConsistent => g,
            CalibrationMode::LiteralEq12 => -g,
        }
    }
}

impl std::str::FromStr for CalibrationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "assumption" | "assumption-consistent" => Ok(Self::AssumptionConsistent),
            "literal" | "literal-eq12" => Ok(Self::LiteralEq12),
            _ => Err(format!(
                "unknown calibration mode {s:?} (expected assumption-consistent or literal-eq12)"
            )),
        }
    }
}

impl std::fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AssumptionConsistent => "assumption-consistent",
            Self::LiteralEq12 => "literal-eq12",
        })
    }
}

/// Negative Bernoulli log-likelihood with the probability kept inside
/// `[1e-12, 1 - 1e-12]`.
pub fn prediction_loss(prob: f64, label: u8) -> f64 {
    let r = f64::from(label);
    -(r * prob.max(LOG_FLOOR).ln() + (1.0 - r) * (1.0 - prob).max(LOG_FLOOR).ln())
}

/// Three-way sign of `o_a - o_b`.
pub fn ordering_sign(o_a: f64, o_b: f64) -> f64 {
    if o_a > o_b {
        1.0
    } else if o_a == o_b {
        0.0
    } else {
        -1.0
    }
}

/// Pairwise hinge between two variances and their correct-prediction
/// frequencies.
pub fn calibration_pair_loss(var_a: f64, var_b: f64, o_a: f64, o_b: f64, mode: CalibrationMode) -> f64 {
    let g = mode.coefficient(ordering_sign(o_a, o_b));
    (g * (var_a - var_b) + (o_a - o_b).abs()).max(0.0)
}

/// One sampled calibration pair: `(batch row, latent column)` of each side
/// and the tracker frequencies at sampling time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationPair {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub o_a: f64,
    pub o_b: f64,
}

/// Draws `count` pairs of distinct batch positions. Each side picks one
/// concept of its exercise uniformly (the single column for a scalar
/// tracker); pairs touching a cell without tracker data are dropped.
pub fn sample_pairs<R: Rng + ?Sized>(
    dataset: &Dataset,
    batch: &[usize],
    tracker: &CorrectnessTracker,
    count: usize,
    rng: &mut R,
) -> Vec<CalibrationPair> {
    let n = batch.len();
    if n < 2 {
        return Vec::new();
    }
    let side = |row: usize, rng: &mut R| {
        let it = dataset.interactions[batch[row]];
        let concepts = dataset.q.concepts(it.exercise);
        let concept = concepts[rng.random_range(0..concepts.len())];
        let col = tracker.cell_col(concept);
        ((row, col), tracker.frequency(it.student, col))
    };
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, o_a) = side(i, rng);
        let (b, o_b) = side(j, rng);
        if let (Some(o_a), Some(o_b)) = (o_a, o_b) {
            pairs.push(CalibrationPair { a, b, o_a, o_b });
        }
    }
    pairs
}

/// Randomness consumed by one batch: reparameterization noise, the
/// variance-dropout keep mask (both row-major `B x d`) and the sampled pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNoise {
    pub eps: Vec<f64>,
    pub keep: Vec<bool>,
    pub pairs: Vec<CalibrationPair>,
}

impl BatchNoise {
    pub fn draw<R1, R2>(rows: usize, dim: usize, dropout: &DropoutConfig, sampling: &mut R1, dropout_rng: &mut R2) -> Self
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let eps = (0..rows * dim).map(|_| StandardNormal.sample(sampling)).collect();
        let keep = dropout.draw_mask(rows * dim, dropout_rng);
        Self {
            eps,
            keep,
            pairs: Vec::new(),
        }
    }
}

/// Weights and switches of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub mode: CalibrationMode,
    /// Average the KL over distinct students instead of over interactions.
    pub kl_dedup: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pred: f64,
    pub kl: f64,
    pub rl: f64,
    pub total: f64,
    /// Calibration pairs that contributed.
    pub pairs: usize,
}

/// Evaluates the objective on one batch, adds its gradient into the model's
/// parameter store, and returns the loss terms with the batch predictions.
pub fn batch_loss(
    model: &mut Model,
    dataset: &Dataset,
    batch: &[usize],
    prior: &PriorConsensus,
    settings: &LossSettings,
    noise: &BatchNoise,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let items: Vec<_> = batch.iter().map(|&i| dataset.interactions[i]).collect();
    let students: Vec<usize> = items.iter().map(|it| it.student).collect();
    let exercises: Vec<usize> = items.iter().map(|it| it.exercise).collect();
    let labels: Vec<f64> = items.iter().map(|it| f64::from(it.score)).collect();

    let mut tape = Tape::new();
    let mean = tape.gather(model.store(), model.ids.mean, &students);
    let log_var = tape.gather(model.store(), model.ids.log_var, &students);
    let latent = latent_nodes(
        &mut tape,
        mean,
        log_var,
        noise.keep.clone(),
        settings.alpha,
        noise.eps.clone(),
        &prior.mean,
    );
    let y = predict_nodes(&mut tape, model, latent.theta, &exercises, &dataset.q);

    // prediction loss
    let ln_y = tape.ln(y);
    let flipped = tape.scale(y, -1.0);
    let one_minus = tape.shift(flipped, 1.0);
    let ln_not_y = tape.ln(one_minus);
    let pos = tape.mul_const(ln_y, labels.clone());
    let neg = tape.mul_const(ln_not_y, labels.iter().map(|r| 1.0 - r).collect());
    let ll = tape.add(pos, neg);
    let nll = tape.scale(ll, -1.0);
    let pred = tape.mean(nll);

    let kl = if settings.kl_dedup {
        let mut seen = std::collections::HashSet::new();
        let rows: Vec<(usize, usize)> = students
            .iter()
            .enumerate()
            .filter(|(_, s)| seen.insert(**s))
            .map(|(r, _)| (r, 0))
            .collect();
        let picked = tape.pick(latent.kl, rows);
        tape.mean(picked)
    } else {
        tape.mean(latent.kl)
    };

    let rl = if noise.pairs.is_empty() {
        tape.constant(Matrix::zeros(1, 1))
    } else {
        let va = tape.pick(latent.variance, noise.pairs.iter().map(|p| p.a).collect());
        let vb = tape.pick(latent.variance, noise.pairs.iter().map(|p| p.b).collect());
        let diff = tape.sub(va, vb);
        let coef = noise
            .pairs
            .iter()
            .map(|p| settings.mode.coefficient(ordering_sign(p.o_a, p.o_b)))
            .collect();
        let margin = noise.pairs.iter().map(|p| (p.o_a - p.o_b).abs()).collect();
        let signed = tape.mul_const(diff, coef);
        let arg = tape.add_const(signed, margin);
        let hinge = tape.relu(arg);
        tape.mean(hinge)
    };

    let weighted_kl = tape.scale(kl, settings.gamma);
    let weighted_rl = tape.scale(rl, settings.beta);
    let total = tape.add(pred, weighted_kl);
    let total = tape.add(total, weighted_rl);

    let breakdown = LossBreakdown {
        pred: tape.scalar(pred),
        kl: tape.scalar(kl),
        rl: tape.scalar(rl),
        total: tape.scalar(total),
        pairs: noise.pairs.len(),
    };
    for (term, value) in [("prediction", breakdown.pred), ("KL", breakdown.kl), ("calibration", breakdown.rl)] {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                term,
                value,
                phase: 0,
                epoch: 0,
            });
        }
    }
    tape.backward(total, model.store_mut());
    let probs = tape.value(y).as_slice().to_vec();
    Ok((breakdown, probs))
}
