//! Gaussian student posteriors, reparameterized sampling, variance dropout,
//! KL divergences and the prior consensus.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::numerics::{stable_sigmoid, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StudentPosterior {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl StudentPosterior {
    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| lv.exp()).collect()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }
}

/// Prior `N(mean, 1)` per latent dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConsensus {
    pub mean: Vec<f64>,
}

impl PriorConsensus {
    /// The standard normal prior.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub enabled: bool,
    /// Fallback variance substituted for dropped entries.
    pub alpha: f64,
    /// Probability that a learned variance is kept.
    pub keep_probability: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha: 0.5,
            keep_probability: 0.5,
        }
    }
}

impl DropoutConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(format!("dropout_alpha must be positive, got {}", self.alpha));
        }
        if !(self.keep_probability > 0.0 && self.keep_probability <= 1.0) {
            return Err(format!(
                "dropout_keep must lie in (0, 1], got {}",
                self.keep_probability
            ));
        }
        Ok(())
    }

    /// Bernoulli keep mask of length `n`; all `true` when disabled.
    pub fn draw_mask<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<bool> {
        if !self.enabled {
            return vec![true; n];
        }
        let dist = Bernoulli::new(self.keep_probability).expect("validated probability");
        (0..n).map(|_| dist.sample(rng)).collect()
    }
}

pub fn posterior_of(model: &Model, student: usize) -> Result<StudentPosterior> {
    let n = model.dims().students;
    if student >= n {
        return Err(Error::IndexOutOfRange {
            what: "student",
            index: student,
            len: n,
        });
    }
    Ok(StudentPosterior {
        mean: model.student_means().row(student).to_vec(),
        log_var: model.student_log_vars().row(student).to_vec(),
    })
}

/// Each entry is kept with probability `keep_probability` and otherwise
/// replaced by exactly `alpha`.
pub fn apply_variance_dropout<R: Rng + ?Sized>(
    variance: &[f64],
    cfg: &DropoutConfig,
    rng: &mut R,
) -> Vec<f64> {
    let mask = cfg.draw_mask(variance.len(), rng);
    apply_mask(variance, &mask, cfg.alpha)
}

pub fn apply_mask(variance: &[f64], keep: &[bool], alpha: f64) -> Vec<f64> {
    variance
        .iter()
        .zip(keep)
        .map(|(&v, &k)| if k { v } else { alpha })
        .collect()
}

/// `z = mean + sqrt(variance) * eps` with standard normal `eps`, and
/// `theta = sigmoid(z)`.
pub fn sample_ability<R: Rng + ?Sized>(
    posterior: &StudentPosterior,
    variance: &[f64],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(posterior.mean.len(), variance.len());
    let z: Vec<f64> = posterior
        .mean
        .iter()
        .zip(variance)
        .map(|(&m, &v)| {
            let eps: f64 = StandardNormal.sample(rng);
            m + v.sqrt() * eps
        })
        .collect();
    let theta = z.iter().map(|&x| stable_sigmoid(x)).collect();
    (z, theta)
}

/// `KL(N(mean, variance) || N(0, 1))`, summed over dimensions.
pub fn kl_standard(mean: &[f64], variance: &[f64]) -> f64 {
    mean.iter()
        .zip(variance)
        .map(|(&m, &v)| 0.5 * (m * m + v - v.ln() - 1.0))
        .sum()
}

/// `KL(N(mean, variance) || N(prior.mean, 1))`, summed over dimensions.
pub fn kl_consensus(mean: &[f64], variance: &[f64], prior: &PriorConsensus) -> f64 {
    assert_eq!(mean.len(), prior.mean.len());
    0.5 * mean
        .iter()
        .zip(variance)
        .zip(&prior.mean)
        .map(|((&m, &v), &p)| (m - p).powi(2) + v - v.ln() - 1.0)
        .sum::<f64>()
}

/// Elementwise mean of all students' posterior means.
pub fn compute_consensus(model: &Model) -> Result<PriorConsensus> {
    let means = model.student_means();
    if means.rows() == 0 {
        return Err(Error::Empty("compute_consensus"));
    }
    let mut sum = vec![0.0; means.cols()];
    for r in 0..means.rows() {
        for (s, &m) in sum.iter_mut().zip(means.row(r)) {
            *s += m;
        }
    }
    let n = means.rows() as f64;
    Ok(PriorConsensus {
        mean: sum.into_iter().map(|s| s / n).collect(),
    })
}

/// Tape nodes for a batch of posteriors: post-dropout variance, the
/// reparameterized sample, and the per-row KL to `N(prior_mean, 1)`.
pub(crate) struct LatentNodes {
    pub variance: Var,
    pub theta: Var,
    pub kl: Var,
}

/// `mean` and `log_var` are `B x d` nodes; `keep` and `eps` are row-major
/// `B x d` noise.
pub(crate) fn latent_nodes(
    tape: &mut Tape,
    mean: Var,
    log_var: Var,
    keep: Vec<bool>,
    alpha: f64,
    eps: Vec<f64>,
    prior_mean: &[f64],
) -> LatentNodes {
    let (b, d) = tape.value(mean).shape();
    let raw_var = tape.exp(log_var);
    let variance = tape.mask_fill(raw_var, keep, alpha);
    let std = tape.sqrt(variance);
    let noise = tape.mul_const(std, eps);
    let z = tape.add(mean, noise);
    let theta = tape.sigmoid(z);

    let shift: Vec<f64> = (0..b).flat_map(|_| prior_mean.iter().map(|p| -p)).collect();
    debug_assert_eq!(shift.len(), b * d);
    let centered = tape.add_const(mean, shift);
    let sq = tape.square(centered);
    let log_v = tape.ln(variance);
    let terms = tape.add(sq, variance);
    let terms = tape.sub(terms, log_v);
    let terms = tape.shift(terms, -1.0);
    let per_row = tape.sum_rows(terms);
    let kl = tape.scale(per_row, 0.5);
    LatentNodes {
        variance,
        theta,
        kl,
    }
}
