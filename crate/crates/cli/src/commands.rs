//! The subcommands, returning what they wrote so callers can print or test it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use confdiag::data::{
    filter_students, load_logs, load_q_matrix, split_per_student, Dataset, Split, SplitName, SplitSpec,
};
use confdiag::diagnostics::Variant;
use confdiag::metrics::{calibration, reliability_rows, write_reliability_csv, MetricReport, ScoredPair};
use confdiag::model::Model;
use confdiag::numerics::stable_sigmoid;
use confdiag::training::{predict_indices, train_with, Checkpoint, DataSource, EpochRecord};
use confdiag::{Error, Result};

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.txt";
pub const PREDICTIONS_HEADER: [&str; 4] = ["student_id", "exercise_id", "label", "prob"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_owned(),
        source: e.into(),
    }
}

/// Probability as written to CSV files.
pub fn fmt_prob(p: f64) -> String {
    format!("{p:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_prob).unwrap_or_default()
}

pub fn load_dataset(logs: &Path, q_matrix: &Path, min_logs: usize) -> Result<Dataset> {
    let logs = filter_students(&load_logs(logs)?, min_logs);
    if logs.is_empty() {
        return Err(Error::Invalid(format!("no student has at least {min_logs} logs")));
    }
    Dataset::build(&logs, &load_q_matrix(q_matrix)?)
}

#[derive(Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub resolved_config: PathBuf,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub validation: MetricReport,
}

pub fn train(config_path: &Path, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainSummary> {
    let cfg = RunConfig::load(config_path)?;
    let dataset = load_dataset(&cfg.logs, &cfg.q_matrix, cfg.min_logs)?;
    let split = split_per_student(&dataset, &cfg.split)?;
    let out_dir = &cfg.output_dir;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let resolved = out_dir.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&resolved, cfg.to_text()).map_err(io_err(&resolved))?;

    let log_path = out_dir.join(TRAIN_LOG_FILE);
    let mut log = csv_writer(&log_path)?;
    log.write_record([
        "epoch", "phase", "l_pred", "l_kl", "l_rl", "l_total", "val_acc", "val_auc", "val_ece",
    ])
    .map_err(csv_err(&log_path))?;
    let mut write_err = None;
    let outcome = train_with(&dataset, &split, cfg.model, cfg.train, |r| {
        on_epoch(r);
        let row = [
            r.epoch.to_string(),
            r.phase.to_string(),
            fmt_prob(r.pred),
            fmt_prob(r.kl),
            fmt_prob(r.rl),
            fmt_prob(r.total),
            fmt_prob(r.validation.acc),
            fmt_opt(r.validation.auc),
            fmt_prob(r.validation.ece),
        ];
        if let Err(e) = log.write_record(&row) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(csv_err(&log_path)(e));
    }
    log.flush().map_err(io_err(&log_path))?;

    let source = DataSource {
        logs: cfg.logs.display().to_string(),
        q_matrix: cfg.q_matrix.display().to_string(),
        min_logs: cfg.min_logs,
        split: cfg.split,
    };
    let ckpt = Checkpoint::new(&outcome, &dataset, cfg.train, Some(source));
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    ckpt.save(&ckpt_path)?;
    Ok(TrainSummary {
        checkpoint: ckpt_path,
        log: log_path,
        resolved_config: resolved,
        epochs: outcome.log,
        best_epoch: outcome.best_epoch,
        validation: outcome.validation,
    })
}

/// A checkpoint with the model and the dataset and split it was trained on.
pub struct Session {
    pub checkpoint: Checkpoint,
    pub model: Model,
    pub dataset: Dataset,
    pub split: Split,
    pub dir: PathBuf,
}

impl Session {
    pub fn open(path: &Path) -> Result<Self> {
        let checkpoint = Checkpoint::load(path)?;
        let model = checkpoint.to_model()?;
        let source = checkpoint
            .data
            .clone()
            .ok_or_else(|| Error::Checkpoint("no data source recorded".into()))?;
        let dataset = load_dataset(Path::new(&source.logs), Path::new(&source.q_matrix), source.min_logs)?;
        checkpoint.check_dataset(&dataset)?;
        let split = split_per_student(&dataset, &source.split)?;
        let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(Self {
            checkpoint,
            model,
            dataset,
            split,
            dir,
        })
    }

    pub fn split_spec(&self) -> SplitSpec {
        self.checkpoint.data.as_ref().map(|d| d.split).unwrap_or_default()
    }

    /// Deterministic predictions on `split`, rounded to the precision
    /// written to CSV so every report agrees with the files.
    pub fn predictions(&self, split: SplitName) -> Result<Vec<(usize, ScoredPair)>> {
        let indices = self.split.get(split);
        if indices.is_empty() {
            return Err(Error::Empty("split"));
        }
        let pairs = predict_indices(&self.model, &self.dataset, indices)?;
        Ok(indices
            .iter()
            .zip(pairs)
            .map(|(&i, p)| {
                let prob = fmt_prob(p.prob).parse().expect("formatted float parses");
                (i, ScoredPair::new(prob, p.label))
            })
            .collect())
    }
}

#[derive(Debug)]
pub struct EvalSummary {
    pub report: MetricReport,
    pub predictions: PathBuf,
    pub rows: usize,
}

pub fn eval(checkpoint: &Path, split: SplitName, out: Option<&Path>) -> Result<EvalSummary> {
    let s = Session::open(checkpoint)?;
    let preds = s.predictions(split)?;
    let pairs: Vec<ScoredPair> = preds.iter().map(|(_, p)| *p).collect();
    let report = MetricReport::compute(&pairs, s.checkpoint.train.bins)?;
    let path = out.map_or_else(|| s.dir.join(format!("predictions_{split}.csv")), Path::to_path_buf);
    let mut w = csv_writer(&path)?;
    w.write_record(PREDICTIONS_HEADER).map_err(csv_err(&path))?;
    for (i, p) in &preds {
        let it = s.dataset.interactions[*i];
        w.write_record([
            s.dataset.students.id(it.student),
            s.dataset.exercises.id(it.exercise),
            &p.label.to_string(),
            &fmt_prob(p.prob),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(EvalSummary {
        report,
        predictions: path,
        rows: preds.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosisRow {
    /// 1 = smallest standard deviation.
    pub rank: usize,
    pub concept_id: String,
    /// `sigmoid(mean)`.
    pub mastery: f64,
    pub sigma: f64,
    /// Training predictions counted for this concept.
    pub interactions: u32,
    /// Share of those predictions that were correct.
    pub correct_rate: Option<f64>,
    /// Training-split logs covering this concept.
    pub train_logs: u32,
}

#[derive(Debug)]
pub struct Diagnosis {
    pub student_id: String,
    pub variant: Variant,
    pub rows: Vec<DiagnosisRow>,
    pub csv: PathBuf,
}

pub const DIAGNOSIS_HEADER: [&str; 7] = [
    "rank",
    "concept_id",
    "mastery",
    "sigma",
    "interactions",
    "correct_rate",
    "train_logs",
];

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Per-concept mastery and spread for one student, ordered by ascending
/// standard deviation (ties by concept order). A scalar ability is shown
/// for every concept.
pub fn diagnose_rows(s: &Session, student: usize) -> Vec<DiagnosisRow> {
    let k = s.dataset.n_concepts();
    let mean = s.model.student_means().row(student);
    let log_var = s.model.student_log_vars().row(student);
    let tracker = &s.checkpoint.tracker;
    let counts = s.dataset.concept_counts(&s.split.train);
    let mut rows: Vec<DiagnosisRow> = (0..k)
        .map(|l| {
            let col = if mean.len() == 1 { 0 } else { l };
            DiagnosisRow {
                rank: 0,
                concept_id: s.dataset.concepts.id(l).to_owned(),
                mastery: stable_sigmoid(mean[col]),
                sigma: (0.5 * log_var[col]).exp(),
                interactions: tracker.total(student, tracker.cell_col(l)),
                correct_rate: tracker.frequency(student, tracker.cell_col(l)),
                train_logs: counts[student * k + l],
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| rows[a].sigma.total_cmp(&rows[b].sigma).then(a.cmp(&b)));
    for (rank, &l) in order.iter().enumerate() {
        rows[l].rank = rank + 1;
    }
    order.into_iter().map(|l| rows[l].clone()).collect()
}

pub fn diagnose(checkpoint: &Path, student_id: &str, out: Option<&Path>) -> Result<Diagnosis> {
    let s = Session::open(checkpoint)?;
    let student = s.dataset.students.index_of(student_id).ok_or_else(|| Error::UnknownId {
        kind: "student",
        id: student_id.to_owned(),
    })?;
    let rows = diagnose_rows(&s, student);
    let path = out.map_or_else(
        || s.dir.join(format!("diagnosis_{}.csv", file_safe(student_id))),
        Path::to_path_buf,
    );
    let mut w = csv_writer(&path)?;
    w.write_record(DIAGNOSIS_HEADER).map_err(csv_err(&path))?;
    for r in &rows {
        w.write_record([
            r.rank.to_string(),
            r.concept_id.clone(),
            fmt_prob(r.mastery),
            fmt_prob(r.sigma),
            r.interactions.to_string(),
            fmt_opt(r.correct_rate),
            r.train_logs.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(Diagnosis {
        student_id: student_id.to_owned(),
        variant: s.model.variant(),
        rows,
        csv: path,
    })
}

pub const ABILITY_HEADER: [&str; 5] = ["student_id", "concept_id", "mastery", "sigma", "interacted"];

/// Writes one row per (student, concept); returns the path and row count.
pub fn export_ability(checkpoint: &Path, out: Option<&Path>) -> Result<(PathBuf, usize)> {
    let s = Session::open(checkpoint)?;
    let path = out.map_or_else(|| s.dir.join("ability.csv"), Path::to_path_buf);
    let k = s.dataset.n_concepts();
    let counts = s.dataset.concept_counts(&s.split.train);
    let means = s.model.student_means();
    let log_vars = s.model.student_log_vars();
    let mut w = csv_writer(&path)?;
    w.write_record(ABILITY_HEADER).map_err(csv_err(&path))?;
    let mut rows = 0;
    for i in 0..s.dataset.n_students() {
        for l in 0..k {
            let col = if means.cols() == 1 { 0 } else { l };
            w.write_record([
                s.dataset.students.id(i),
                s.dataset.concepts.id(l),
                &fmt_prob(stable_sigmoid(means.get(i, col))),
                &fmt_prob((0.5 * log_vars.get(i, col)).exp()),
                if counts[i * k + l] > 0 { "1" } else { "0" },
            ])
            .map_err(csv_err(&path))?;
            rows += 1;
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok((path, rows))
}

#[derive(Debug)]
pub struct ReliabilitySummary {
    pub csv: PathBuf,
    pub bins: usize,
    pub ece: f64,
    pub mce: f64,
}

pub fn export_reliability(checkpoint: &Path, split: SplitName, bins: usize, out: Option<&Path>) -> Result<ReliabilitySummary> {
    if bins == 0 {
        return Err(Error::Config(vec!["bins must be at least 1".into()]));
    }
    let s = Session::open(checkpoint)?;
    let pairs: Vec<ScoredPair> = s.predictions(split)?.into_iter().map(|(_, p)| p).collect();
    let report = calibration(&pairs, bins)?;
    let path = out.map_or_else(|| s.dir.join(format!("reliability_{split}.csv")), Path::to_path_buf);
    let mut w = create(&path)?;
    write_reliability_csv(&reliability_rows(&report), &mut w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    Ok(ReliabilitySummary {
        csv: path,
        bins,
        ece: report.ece,
        mce: report.mce,
    })
}
