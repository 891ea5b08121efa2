use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorrectnessTracker, TrainConfig, TrainOutcome};
use crate::data::{Dataset, IdMap, SplitSpec};
use crate::latent::PriorConsensus;
use crate::metrics::MetricReport;
use crate::model::{Dims, Model, ModelConfig};
use crate::numerics::Matrix;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

/// Where the training data came from, so later commands can rebuild the
/// same dataset and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub logs: String,
    pub q_matrix: String,
    pub min_logs: usize,
    pub split: SplitSpec,
}

/// Serialized JSON keeps every `f64` exactly, so a saved checkpoint loads
/// and re-saves to the same bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub dims: Dims,
    pub params: Vec<StoredMatrix>,
    pub consensus: Vec<f64>,
    pub students: IdMap,
    pub exercises: IdMap,
    pub concepts: IdMap,
    pub train: TrainConfig,
    pub data: Option<DataSource>,
    pub best_epoch: usize,
    pub validation: MetricReport,
    pub tracker: CorrectnessTracker,
}

impl Checkpoint {
    pub fn new(outcome: &TrainOutcome, dataset: &Dataset, train: TrainConfig, data: Option<DataSource>) -> Self {
        Self::from_parts(
            &outcome.model,
            &outcome.consensus,
            &outcome.tracker,
            dataset,
            train,
            data,
            outcome.best_epoch,
            outcome.validation,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        model: &Model,
        consensus: &PriorConsensus,
        tracker: &CorrectnessTracker,
        dataset: &Dataset,
        train: TrainConfig,
        data: Option<DataSource>,
        best_epoch: usize,
        validation: MetricReport,
    ) -> Self {
        let params = model
            .named_params()
            .map(|(name, m)| StoredMatrix {
                name: name.to_owned(),
                rows: m.rows(),
                cols: m.cols(),
                data: m.as_slice().to_vec(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            model: *model.config(),
            dims: model.dims(),
            params,
            consensus: consensus.mean.clone(),
            students: dataset.students.clone(),
            exercises: dataset.exercises.clone(),
            concepts: dataset.concepts.clone(),
            train,
            data,
            best_epoch,
            validation,
            tracker: tracker.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        match probe.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Checkpoint(format!("unsupported format_version {v}"))),
            None => return Err(Error::Checkpoint("missing format_version".into())),
        }
        let ckpt: Self = serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.check()?;
        Ok(ckpt)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Checkpoint(m));
        if self.students.len() != self.dims.students
            || self.exercises.len() != self.dims.exercises
            || self.concepts.len() != self.dims.concepts
        {
            return bad("id maps disagree with the stored dimensions".into());
        }
        if self.consensus.len() != self.model.latent_dim(self.dims.concepts) {
            return bad("consensus vector has the wrong length".into());
        }
        if self.tracker.students() != self.dims.students || !self.tracker.validate() {
            return bad("tracker does not match the stored dimensions".into());
        }
        for p in &self.params {
            if p.rows * p.cols != p.data.len() {
                return bad(format!("parameter {} has {} values for shape {}x{}", p.name, p.data.len(), p.rows, p.cols));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_model(&self) -> Result<Model> {
        self.check()?;
        let params = self
            .params
            .iter()
            .map(|p| (p.name.clone(), Matrix::from_vec(p.rows, p.cols, p.data.clone())))
            .collect();
        Model::from_params(self.model, self.dims, params)
    }

    pub fn prior(&self) -> PriorConsensus {
        PriorConsensus {
            mean: self.consensus.clone(),
        }
    }

    /// Fails unless `dataset` indexes students, exercises and concepts
    /// exactly as the checkpoint does.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        for (kind, ours, theirs) in [
            ("student", &self.students, &dataset.students),
            ("exercise", &self.exercises, &dataset.exercises),
            ("concept", &self.concepts, &dataset.concepts),
        ] {
            if let Some(id) = theirs.ids().iter().find(|id| ours.index_of(id).is_none()) {
                return Err(Error::UnknownId { kind, id: id.clone() });
            }
            if ours != theirs {
                return Err(Error::Checkpoint(format!(
                    "{kind} indexing differs from the checkpoint's"
                )));
            }
        }
        Ok(())
    }
}
