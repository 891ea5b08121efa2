//! Two-phase training: a pretraining phase against a standard-normal prior,
//! then the full objective against the consensus prior learned in phase one.

mod checkpoint;
mod loss;
mod tracker;

pub use checkpoint::{Checkpoint, DataSource, StoredMatrix, FORMAT_VERSION};
pub use loss::{
    batch_loss, calibration_pair_loss, ordering_sign, prediction_loss, sample_pairs, BatchNoise,
    CalibrationMode, CalibrationPair, LossBreakdown, LossSettings,
};
pub use tracker::CorrectnessTracker;

use serde::{Deserialize, Serialize};

use crate::data::{batches, Dataset, Split};
use crate::diagnostics::{predict, Variant};
use crate::latent::{compute_consensus, DropoutConfig, PriorConsensus};
use crate::metrics::{MetricReport, ScoredPair};
use crate::model::{Dims, Model, ModelConfig};
use crate::numerics::{adam_step, stable_sigmoid, AdamConfig};
use crate::rng::{stream, Rng, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// KL weight.
    pub gamma: f64,
    /// Calibration weight in the main phase.
    pub beta: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epoch cap of the pretraining phase.
    pub pretrain_epochs: usize,
    /// Epoch cap of the main phase.
    pub max_epochs: usize,
    /// Epochs without a validation-AUC improvement before a phase stops.
    pub patience: usize,
    pub seed: u64,
    pub dropout: DropoutConfig,
    pub calibration_mode: CalibrationMode,
    pub kl_dedup: bool,
    /// Calibration pairs drawn per batch; `None` uses the batch size.
    pub pairs_per_batch: Option<usize>,
    /// Bin count of the validation ECE.
    pub bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            beta: 0.1,
            batch_size: 32,
            adam: AdamConfig::default(),
            pretrain_epochs: 100,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            dropout: DropoutConfig::default(),
            calibration_mode: CalibrationMode::default(),
            kl_dedup: false,
            pairs_per_batch: None,
            bins: 10,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must be a finite value >= 0, got {}", self.gamma));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            out.push(format!("beta must be a finite value >= 0, got {}", self.beta));
        }
        if self.batch_size < 2 {
            out.push(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if let Err(e) = self.adam.validate() {
            out.push(e.to_string());
        }
        if self.patience == 0 {
            out.push("patience must be at least 1".into());
        }
        if let Err(e) = self.dropout.validate() {
            out.push(e);
        }
        if self.pairs_per_batch == Some(0) {
            out.push("pairs_per_batch must be positive".into());
        }
        if self.bins == 0 {
            out.push("bins must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Pretrain,
    Main,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Pretrain => 1,
            Phase::Main => 2,
        }
    }
}

/// Summary of one epoch. Losses are means over the epoch's batches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: u8,
    pub epoch: usize,
    pub pred: f64,
    pub kl: f64,
    pub rl: f64,
    pub total: f64,
    pub validation: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub loss: LossBreakdown,
    /// Training-time probabilities (sampled abilities) in batch order.
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Snapshot {
    model: Model,
    tracker: CorrectnessTracker,
    epoch: usize,
    validation: MetricReport,
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub consensus: PriorConsensus,
    pub tracker: CorrectnessTracker,
    /// Main-phase epoch of the returned parameters (0 = end of pretraining).
    pub best_epoch: usize,
    pub validation: MetricReport,
    pub log: Vec<EpochRecord>,
}

/// Steppable training state. `train` drives it to completion; callers that
/// want per-epoch control use `run_epoch`, `phase_done` and `start_main_phase`.
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    split: &'a Split,
    cfg: TrainConfig,
    model: Model,
    prior: PriorConsensus,
    tracker: CorrectnessTracker,
    phase: Phase,
    epoch: usize,
    /// Best trained epoch of the current phase, if any epoch has run.
    best: Option<Snapshot>,
    log: Vec<EpochRecord>,
    batch_rng: Rng,
    sampling_rng: Rng,
    dropout_rng: Rng,
    pairing_rng: Rng,
}

fn selection_score(report: &MetricReport) -> f64 {
    report.auc.unwrap_or(report.acc)
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, split: &'a Split, model_cfg: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if split.train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if split.validation.is_empty() {
            return Err(Error::Empty("validation split"));
        }
        let dims = Dims {
            students: dataset.n_students(),
            exercises: dataset.n_exercises(),
            concepts: dataset.n_concepts(),
        };
        let model = Model::new(model_cfg, dims, &mut stream(cfg.seed, Stream::Init))?;
        let cols = if model.variant() == Variant::Irt { 1 } else { dims.concepts };
        let tracker = CorrectnessTracker::new(dims.students, cols);
        let prior = PriorConsensus::standard(model.dim());
        Ok(Self {
            dataset,
            split,
            best: None,
            cfg,
            model,
            prior,
            tracker,
            phase: Phase::Pretrain,
            epoch: 0,
            log: Vec::new(),
            batch_rng: stream(cfg.seed, Stream::Batches),
            sampling_rng: stream(cfg.seed, Stream::Sampling),
            dropout_rng: stream(cfg.seed, Stream::Dropout),
            pairing_rng: stream(cfg.seed, Stream::Pairing),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Epochs completed in the current phase.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn tracker(&self) -> &CorrectnessTracker {
        &self.tracker
    }

    pub fn prior(&self) -> &PriorConsensus {
        &self.prior
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One optimizer step on `batch` (interaction indices).
    pub fn train_batch(&mut self, batch: &[usize]) -> Result<BatchResult> {
        let main = self.phase == Phase::Main;
        let mut noise = BatchNoise::draw(
            batch.len(),
            self.model.dim(),
            &self.cfg.dropout,
            &mut self.sampling_rng,
            &mut self.dropout_rng,
        );
        if main {
            let count = self.cfg.pairs_per_batch.unwrap_or(batch.len());
            noise.pairs = sample_pairs(self.dataset, batch, &self.tracker, count, &mut self.pairing_rng);
        }
        let settings = LossSettings {
            gamma: self.cfg.gamma,
            beta: if main { self.cfg.beta } else { 0.0 },
            alpha: self.cfg.dropout.alpha,
            mode: self.cfg.calibration_mode,
            kl_dedup: self.cfg.kl_dedup,
        };
        let (phase, epoch) = (self.phase.number(), self.epoch + 1);
        let (loss, probs) = batch_loss(&mut self.model, self.dataset, batch, &self.prior, &settings, &noise)
            .map_err(|e| match e {
                Error::NonFiniteLoss { term, value, .. } => Error::NonFiniteLoss {
                    term,
                    value,
                    phase,
                    epoch,
                },
                other => other,
            })?;
        adam_step(self.model.store_mut(), &self.cfg.adam)?;
        self.model.clamp_ncd_weights();
        if main {
            for (&i, &p) in batch.iter().zip(&probs) {
                let it = self.dataset.interactions[i];
                self.tracker
                    .update(it.student, self.dataset.q.concepts(it.exercise), p, it.score);
            }
        }
        Ok(BatchResult { loss, probs })
    }

    /// Trains one epoch of the current phase and scores the validation split.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let order = batches(&self.split.train, self.cfg.batch_size, &mut self.batch_rng)?;
        let mut sum = LossBreakdown::default();
        for batch in &order {
            let r = self.train_batch(batch)?.loss;
            sum.pred += r.pred;
            sum.kl += r.kl;
            sum.rl += r.rl;
            sum.total += r.total;
        }
        self.epoch += 1;
        let n = order.len().max(1) as f64;
        let validation = evaluate(&self.model, self.dataset, &self.split.validation, self.cfg.bins)?;
        let record = EpochRecord {
            phase: self.phase.number(),
            epoch: self.epoch,
            pred: sum.pred / n,
            kl: sum.kl / n,
            rl: sum.rl / n,
            total: sum.total / n,
            validation,
        };
        let improved = self
            .best
            .as_ref()
            .is_none_or(|b| selection_score(&validation) > selection_score(&b.validation));
        if improved {
            self.best = Some(Snapshot {
                model: self.model.clone(),
                tracker: self.tracker.clone(),
                epoch: self.epoch,
                validation,
            });
        }
        self.log.push(record);
        Ok(record)
    }

    /// Whether the current phase has hit its epoch cap or run out of patience.
    pub fn phase_done(&self) -> bool {
        let cap = match self.phase {
            Phase::Pretrain => self.cfg.pretrain_epochs,
            Phase::Main => self.cfg.max_epochs,
        };
        let best = self.best.as_ref().map_or(0, |b| b.epoch);
        self.epoch >= cap || self.epoch - best >= self.cfg.patience
    }

    /// The best snapshot, or the current state when no epoch has run.
    fn take_best(&mut self) -> Result<Snapshot> {
        match self.best.take() {
            Some(b) => Ok(b),
            None => Ok(Snapshot {
                model: self.model.clone(),
                tracker: self.tracker.clone(),
                epoch: 0,
                validation: evaluate(&self.model, self.dataset, &self.split.validation, self.cfg.bins)?,
            }),
        }
    }

    /// Restores the best pretrained parameters, computes the consensus
    /// prior, resets the optimizer and switches to the main phase.
    pub fn start_main_phase(&mut self) -> Result<()> {
        if self.phase == Phase::Main {
            return Err(Error::Invalid("main phase already started".into()));
        }
        self.model = self.take_best()?.model;
        self.model.store_mut().reset_optimizer();
        self.prior = compute_consensus(&self.model)?;
        self.phase = Phase::Main;
        self.epoch = 0;
        Ok(())
    }

    /// The best state of the current phase.
    pub fn finish(mut self) -> Result<TrainOutcome> {
        let best = self.take_best()?;
        Ok(TrainOutcome {
            model: best.model,
            consensus: self.prior,
            tracker: best.tracker,
            best_epoch: best.epoch,
            validation: best.validation,
            log: self.log,
        })
    }
}

/// Runs both phases to completion.
pub fn train(dataset: &Dataset, split: &Split, model_cfg: ModelConfig, cfg: TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, split, model_cfg, cfg, |_| {})
}

/// As `train`, calling `on_epoch` after every epoch.
pub fn train_with(
    dataset: &Dataset,
    split: &Split,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, split, model_cfg, cfg)?;
    while !trainer.phase_done() {
        on_epoch(&trainer.run_epoch()?);
    }
    trainer.start_main_phase()?;
    while !trainer.phase_done() {
        on_epoch(&trainer.run_epoch()?);
    }
    trainer.finish()
}

/// Deterministic predictions with `theta = sigmoid(mean)`.
pub fn predict_indices(model: &Model, dataset: &Dataset, indices: &[usize]) -> Result<Vec<ScoredPair>> {
    let means = model.student_means();
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; means.rows()];
    indices
        .iter()
        .map(|&i| {
            let it = *dataset.interactions.get(i).ok_or(Error::IndexOutOfRange {
                what: "interaction",
                index: i,
                len: dataset.interactions.len(),
            })?;
            if it.student >= means.rows() || it.exercise >= model.dims().exercises {
                return Err(Error::Invalid(format!(
                    "interaction {i} references an index outside the model"
                )));
            }
            let theta = cache[it.student]
                .get_or_insert_with(|| means.row(it.student).iter().map(|&m| stable_sigmoid(m)).collect());
            let prob = predict(model, theta, it.exercise, &dataset.q)?;
            Ok(ScoredPair::new(prob, it.score))
        })
        .collect()
}

pub fn evaluate(model: &Model, dataset: &Dataset, indices: &[usize], bins: usize) -> Result<MetricReport> {
    MetricReport::compute(&predict_indices(model, dataset, indices)?, bins)
}
