//! Response logs, the Q-matrix, dense indexing, per-student splits and
//! mini-batching.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LOG_HEADER: [&str; 3] = ["student_id", "exercise_id", "score"];
pub const Q_HEADER: [&str; 2] = ["exercise_id", "concept_id"];

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseLog {
    pub student_id: String,
    pub exercise_id: String,
    pub score: u8,
}

impl ResponseLog {
    pub fn new(student_id: impl Into<String>, exercise_id: impl Into<String>, score: u8) -> Self {
        Self {
            student_id: student_id.into(),
            exercise_id: exercise_id.into(),
            score,
        }
    }
}

/// One row of the Q-matrix file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QEntry {
    pub exercise_id: String,
    pub concept_id: String,
}

impl QEntry {
    pub fn new(exercise_id: impl Into<String>, concept_id: impl Into<String>) -> Self {
        Self {
            exercise_id: exercise_id.into(),
            concept_id: concept_id.into(),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(
    reader: R,
    path: &Path,
    expected: &[&str],
) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        path: path.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(rdr)
}

pub fn load_logs(path: impl AsRef<Path>) -> Result<Vec<ResponseLog>> {
    let path = path.as_ref();
    read_logs(open(path)?, path)
}

/// Parses a response-log CSV. `path` is only used in error messages.
pub fn read_logs<R: Read>(reader: R, path: &Path) -> Result<Vec<ResponseLog>> {
    let mut rdr = csv_reader(reader, path, &LOG_HEADER)?;
    let mut logs = Vec::new();
    for record in rdr.records() {
        let parse_err = |line: u64, msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let score = match record[2].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(line, format!("score must be 0 or 1, found `{other}`"))),
        };
        logs.push(ResponseLog::new(record[0].trim(), record[1].trim(), score));
    }
    Ok(logs)
}

pub fn load_q_matrix(path: impl AsRef<Path>) -> Result<Vec<QEntry>> {
    let path = path.as_ref();
    read_q_matrix(open(path)?, path)
}

pub fn read_q_matrix<R: Read>(reader: R, path: &Path) -> Result<Vec<QEntry>> {
    let mut rdr = csv_reader(reader, path, &Q_HEADER)?;
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        if record.len() != 2 || record[0].trim().is_empty() || record[1].trim().is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: record.position().map_or(0, |p| p.line()),
                msg: "expected non-empty `exercise_id,concept_id`".into(),
            });
        }
        entries.push(QEntry::new(record[0].trim(), record[1].trim()));
    }
    Ok(entries)
}

/// Keeps exactly the logs of students with at least `min_logs` interactions.
pub fn filter_students(logs: &[ResponseLog], min_logs: usize) -> Vec<ResponseLog> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for log in logs {
        *counts.entry(&log.student_id).or_default() += 1;
    }
    logs.iter()
        .filter(|l| counts[l.student_id.as_str()] >= min_logs)
        .cloned()
        .collect()
}

/// Bijection between opaque ids and `0..len`, in first-insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut map = IdMap::default();
        for id in ids {
            if map.index.contains_key(&id) {
                return Err(Error::Invalid(format!("duplicate id {id:?} in index map")));
            }
            map.insert(&id);
        }
        Ok(map)
    }

    fn insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), self.ids.len() - 1);
        self.ids.len() - 1
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl Serialize for IdMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.ids.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<String>::deserialize(d)?;
        IdMap::from_ids(ids).map_err(serde::de::Error::custom)
    }
}

/// Exercise-to-concept incidence over dense indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QMatrix {
    concept_count: usize,
    rows: Vec<Vec<usize>>,
}

impl QMatrix {
    /// `rows[j]` lists the concepts of exercise `j`; entries are sorted and
    /// deduplicated.
    pub fn new(concept_count: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        for (j, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&bad) = row.iter().find(|&&c| c >= concept_count) {
                return Err(Error::Invalid(format!(
                    "exercise {j} references concept {bad} >= {concept_count}"
                )));
            }
        }
        Ok(Self {
            concept_count,
            rows,
        })
    }

    pub fn exercise_count(&self) -> usize {
        self.rows.len()
    }

    pub fn concept_count(&self) -> usize {
        self.concept_count
    }

    pub fn concepts(&self, exercise: usize) -> &[usize] {
        &self.rows[exercise]
    }

    pub fn contains(&self, exercise: usize, concept: usize) -> bool {
        self.rows[exercise].binary_search(&concept).is_ok()
    }

    /// Dense 0/1 row of length K.
    pub fn mask_row(&self, exercise: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.concept_count];
        for &c in &self.rows[exercise] {
            row[c] = 1.0;
        }
        row
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub student: usize,
    pub exercise: usize,
    pub score: u8,
}

/// Indexed interactions plus the id maps and Q-matrix they refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub students: IdMap,
    pub exercises: IdMap,
    pub concepts: IdMap,
    pub q: QMatrix,
    pub interactions: Vec<Interaction>,
}

impl Dataset {
    /// Indexes students and exercises in first-appearance order of `logs`
    /// and concepts in first-appearance order of `q_entries` (restricted to
    /// exercises that occur in `logs`). Q-matrix rows of unused exercises are
    /// ignored; a log whose exercise has no Q-matrix entry is an error.
    pub fn build(logs: &[ResponseLog], q_entries: &[QEntry]) -> Result<Self> {
        let mut students = IdMap::default();
        let mut exercises = IdMap::default();
        let mut interactions = Vec::with_capacity(logs.len());
        for log in logs {
            if log.score > 1 {
                return Err(Error::Invalid(format!(
                    "score {} for ({}, {}) is not binary",
                    log.score, log.student_id, log.exercise_id
                )));
            }
            interactions.push(Interaction {
                student: students.insert(&log.student_id),
                exercise: exercises.insert(&log.exercise_id),
                score: log.score,
            });
        }
        let mut concepts = IdMap::default();
        let mut rows = vec![Vec::new(); exercises.len()];
        for entry in q_entries {
            if let Some(j) = exercises.index_of(&entry.exercise_id) {
                rows[j].push(concepts.insert(&entry.concept_id));
            }
        }
        if let Some((j, _)) = rows.iter().enumerate().find(|(_, r)| r.is_empty()) {
            let row = logs
                .iter()
                .position(|l| l.exercise_id == exercises.id(j))
                .unwrap_or(0);
            return Err(Error::Invalid(format!(
                "exercise {:?} (log row {}) has no Q-matrix entry",
                exercises.id(j),
                row + 1
            )));
        }
        let q = QMatrix::new(concepts.len(), rows)?;
        Ok(Self {
            students,
            exercises,
            concepts,
            q,
            interactions,
        })
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_exercises(&self) -> usize {
        self.exercises.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    /// Per-(student, concept) counts of the given interactions, row-major
    /// `N x K`.
    pub fn concept_counts(&self, indices: &[usize]) -> Vec<u32> {
        let k = self.n_concepts();
        let mut counts = vec![0u32; self.n_students() * k];
        for &i in indices {
            let it = self.interactions[i];
            for &c in self.q.concepts(it.exercise) {
                counts[it.student * k + c] += 1;
            }
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
    /// When false, each student's records are split in file order.
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
            seed: 0,
            shuffle: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let fr = [self.train, self.validation, self.test];
        if fr.iter().any(|f| !(*f > 0.0)) {
            return Err("split fractions must be positive".into());
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err("split fractions must sum to 1".into());
        }
        Ok(())
    }

    /// `(train, validation, test)` sizes for a student with `n >= 3` logs.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
        let mut train = floor(self.train);
        let validation = floor(self.validation).max(1);
        if train + validation >= n {
            train = n - validation - 1;
        }
        (train, validation, n - train - validation)
    }
}

/// Interaction indices of each split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl Split {
    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

/// Splits each student's interactions at the configured fractions.
pub fn split_per_student(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate().map_err(|m| Error::Config(vec![m]))?;
    let mut per_student = vec![Vec::new(); dataset.n_students()];
    for (i, it) in dataset.interactions.iter().enumerate() {
        per_student[it.student].push(i);
    }
    let mut rng = crate::rng::seeded(crate::rng::sub_seed(spec.seed, "split"));
    let mut split = Split::default();
    for (s, mut own) in per_student.into_iter().enumerate() {
        if own.len() < 3 {
            return Err(Error::Invalid(format!(
                "student {:?} has {} interactions; splitting needs at least 3",
                dataset.students.id(s),
                own.len()
            )));
        }
        if spec.shuffle {
            own.shuffle(&mut rng);
        }
        let (train, validation, _) = spec.counts(own.len());
        split.train.extend_from_slice(&own[..train]);
        split.validation.extend_from_slice(&own[train..train + validation]);
        split.test.extend_from_slice(&own[train + validation..]);
    }
    Ok(split)
}

/// Shuffles `indices` and cuts them into chunks of `batch_size`. A trailing
/// chunk of size 1 is merged into the previous one.
pub fn batches<R: Rng + ?Sized>(
    indices: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::Config(vec![format!(
            "batch_size must be at least 2, got {batch_size}"
        )]));
    }
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() >= 2 && out.last().is_some_and(|c| c.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    Ok(out)
}
