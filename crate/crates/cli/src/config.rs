//! Run configuration: a flat `key = value` text file with `#` comments.
//! Relative paths resolve against the file's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use confdiag::data::SplitSpec;
use confdiag::diagnostics::Variant;
use confdiag::model::ModelConfig;
use confdiag::training::{CalibrationMode, TrainConfig};
use confdiag::{Error, Result};

pub const DEFAULT_MIN_LOGS: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub logs: PathBuf,
    pub q_matrix: PathBuf,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub min_logs: usize,
}

const KEYS: &[&str] = &[
    "logs",
    "q_matrix",
    "output_dir",
    "variant",
    "irt_scale",
    "ncd_hidden1",
    "ncd_hidden2",
    "gamma",
    "beta",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "pretrain_epochs",
    "max_epochs",
    "patience",
    "seed",
    "dropout_enabled",
    "dropout_alpha",
    "dropout_keep",
    "calibration_mode",
    "kl_dedup",
    "pairs_per_batch",
    "bins",
    "min_logs",
    "split_train",
    "split_validation",
    "split_test",
    "split_shuffle",
];

struct Fields<'a> {
    values: BTreeMap<&'a str, (usize, &'a str)>,
    problems: Vec<String>,
}

impl Fields<'_> {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => default,
            Some(&(line, raw)) => raw.parse().unwrap_or_else(|e| {
                self.problems.push(format!("line {line}: {key}: cannot parse {raw:?}: {e}"));
                default
            }),
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> PathBuf {
        match self.values.get(key) {
            Some(&(_, raw)) => base.join(raw),
            None => {
                self.problems.push(format!("missing required key {key}"));
                PathBuf::new()
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and validates `text`, reporting every problem at once.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut fields = Fields {
            values: BTreeMap::new(),
            problems: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                fields.problems.push(format!("line {line}: expected `key = value`"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                fields.problems.push(format!("line {line}: unknown key {key:?}"));
            } else if fields.values.contains_key(key) {
                fields.problems.push(format!("line {line}: duplicate key {key:?}"));
            } else {
                fields.values.insert(key, (line, value));
            }
        }

        let d = TrainConfig::default();
        let m = ModelConfig::default();
        let s = SplitSpec::default();
        let logs = fields.path("logs", base);
        let q_matrix = fields.path("q_matrix", base);
        let output_dir = fields.path("output_dir", base);
        let model = ModelConfig {
            variant: fields.get::<Variant>("variant", m.variant),
            irt_scale: fields.get("irt_scale", m.irt_scale),
            ncd_hidden: [
                fields.get("ncd_hidden1", m.ncd_hidden[0]),
                fields.get("ncd_hidden2", m.ncd_hidden[1]),
            ],
        };
        let seed = fields.get("seed", d.seed);
        let train = TrainConfig {
            gamma: fields.get("gamma", d.gamma),
            beta: fields.get("beta", d.beta),
            batch_size: fields.get("batch_size", d.batch_size),
            adam: confdiag::numerics::AdamConfig {
                learning_rate: fields.get("learning_rate", d.adam.learning_rate),
                beta1: fields.get("adam_beta1", d.adam.beta1),
                beta2: fields.get("adam_beta2", d.adam.beta2),
                epsilon: fields.get("adam_epsilon", d.adam.epsilon),
            },
            pretrain_epochs: fields.get("pretrain_epochs", d.pretrain_epochs),
            max_epochs: fields.get("max_epochs", d.max_epochs),
            patience: fields.get("patience", d.patience),
            seed,
            dropout: confdiag::latent::DropoutConfig {
                enabled: fields.get("dropout_enabled", d.dropout.enabled),
                alpha: fields.get("dropout_alpha", d.dropout.alpha),
                keep_probability: fields.get("dropout_keep", d.dropout.keep_probability),
            },
            calibration_mode: fields.get::<CalibrationMode>("calibration_mode", d.calibration_mode),
            kl_dedup: fields.get("kl_dedup", d.kl_dedup),
            pairs_per_batch: fields.values.contains_key("pairs_per_batch").then(|| fields.get("pairs_per_batch", 0usize)),
            bins: fields.get("bins", d.bins),
        };
        let split = SplitSpec {
            train: fields.get("split_train", s.train),
            validation: fields.get("split_validation", s.validation),
            test: fields.get("split_test", s.test),
            seed,
            shuffle: fields.get("split_shuffle", s.shuffle),
        };
        let min_logs = fields.get("min_logs", DEFAULT_MIN_LOGS);

        let mut problems = fields.problems;
        problems.extend(train.problems());
        if let Err(e) = split.validate() {
            problems.push(e);
        }
        if !(model.irt_scale > 0.0 && model.irt_scale.is_finite()) {
            problems.push(format!("irt_scale must be positive, got {}", model.irt_scale));
        }
        if model.ncd_hidden.contains(&0) {
            problems.push("ncd_hidden1 and ncd_hidden2 must be positive".into());
        }
        if min_logs == 0 {
            problems.push("min_logs must be positive".into());
        }
        for (key, p) in [("logs", &logs), ("q_matrix", &q_matrix)] {
            if !p.as_os_str().is_empty() && !p.is_file() {
                problems.push(format!("{key}: file {} does not exist", p.display()));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(Self {
            logs,
            q_matrix,
            output_dir,
            model,
            train,
            split,
            min_logs,
        })
    }

    /// Every key with its effective value, in a form `parse` accepts.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("logs", self.logs.display().to_string());
        put("q_matrix", self.q_matrix.display().to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("variant", self.model.variant.to_string());
        put("irt_scale", self.model.irt_scale.to_string());
        put("ncd_hidden1", self.model.ncd_hidden[0].to_string());
        put("ncd_hidden2", self.model.ncd_hidden[1].to_string());
        put("gamma", t.gamma.to_string());
        put("beta", t.beta.to_string());
        put("batch_size", t.batch_size.to_string());
        put("learning_rate", t.adam.learning_rate.to_string());
        put("adam_beta1", t.adam.beta1.to_string());
        put("adam_beta2", t.adam.beta2.to_string());
        put("adam_epsilon", t.adam.epsilon.to_string());
        put("pretrain_epochs", t.pretrain_epochs.to_string());
        put("max_epochs", t.max_epochs.to_string());
        put("patience", t.patience.to_string());
        put("seed", t.seed.to_string());
        put("dropout_enabled", t.dropout.enabled.to_string());
        put("dropout_alpha", t.dropout.alpha.to_string());
        put("dropout_keep", t.dropout.keep_probability.to_string());
        put("calibration_mode", t.calibration_mode.to_string());
        put("kl_dedup", t.kl_dedup.to_string());
        if let Some(p) = t.pairs_per_batch {
            put("pairs_per_batch", p.to_string());
        }
        put("bins", t.bins.to_string());
        put("min_logs", self.min_logs.to_string());
        put("split_train", self.split.train.to_string());
        put("split_validation", self.split.validation.to_string());
        put("split_test", self.split.test.to_string());
        put("split_shuffle", self.split.shuffle.to_string());
        out
    }
}
