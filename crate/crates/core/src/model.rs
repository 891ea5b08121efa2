//! Learnable parameters of a diagnosis model and their layout in the store.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Variant;
use crate::numerics::{xavier_init, Matrix, ParamId, ParameterStore};
use crate::{Error, Result};

pub const STUDENT_MEAN: &str = "student_mean";
pub const STUDENT_LOG_VAR: &str = "student_log_var";
pub const EXERCISE_DIFFICULTY: &str = "exercise_difficulty";
pub const EXERCISE_DISCRIMINATION: &str = "exercise_discrimination";
const NCD_LAYERS: [(&str, &str); 3] = [
    ("ncd_w1", "ncd_b1"),
    ("ncd_w2", "ncd_b2"),
    ("ncd_w3", "ncd_b3"),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Scaling constant `D` of the logistic IRT model.
    pub irt_scale: f64,
    /// Widths of the two hidden NCD layers.
    pub ncd_hidden: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Ncd,
            irt_scale: 1.702,
            ncd_hidden: [512, 256],
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn latent_dim(&self, n_concepts: usize) -> usize {
        match self.variant {
            Variant::Irt => 1,
            Variant::Mirt | Variant::Ncd => n_concepts,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub students: usize,
    pub exercises: usize,
    pub concepts: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ParamIds {
    pub mean: ParamId,
    pub log_var: ParamId,
    pub difficulty: ParamId,
    pub discrimination: Option<ParamId>,
    pub ncd: Option<[(ParamId, ParamId); 3]>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    dims: Dims,
    store: ParameterStore,
    pub(crate) ids: ParamIds,
}

impl Model {
    /// Xavier-initialized weight matrices, zero NCD biases, and NCD weights
    /// clamped to be nonnegative.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, dims: Dims, rng: &mut R) -> Result<Self> {
        let d = config.latent_dim(dims.concepts);
        let mut params = vec![
            (STUDENT_MEAN.to_owned(), xavier_init(dims.students, d, rng)?),
            (STUDENT_LOG_VAR.to_owned(), xavier_init(dims.students, d, rng)?),
            (EXERCISE_DIFFICULTY.to_owned(), xavier_init(dims.exercises, d, rng)?),
        ];
        if config.variant != Variant::Mirt {
            params.push((
                EXERCISE_DISCRIMINATION.to_owned(),
                xavier_init(dims.exercises, 1, rng)?,
            ));
        }
        if config.variant == Variant::Ncd {
            let widths = [dims.concepts, config.ncd_hidden[0], config.ncd_hidden[1], 1];
            for (l, (w, b)) in NCD_LAYERS.iter().enumerate() {
                let mut weight = xavier_init(widths[l], widths[l + 1], rng)?;
                clamp_nonnegative(&mut weight);
                params.push(((*w).to_owned(), weight));
                params.push(((*b).to_owned(), Matrix::zeros(1, widths[l + 1])));
            }
        }
        Self::from_params(config, dims, params)
    }

    /// Rebuilds a model from named parameter matrices, checking that the
    /// set of names and every shape matches `config` and `dims`.
    pub fn from_params(config: ModelConfig, dims: Dims, params: Vec<(String, Matrix)>) -> Result<Self> {
        let expected = expected_shapes(&config, &dims);
        if params.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter matrices, found {}",
                expected.len(),
                params.len()
            )));
        }
        let mut store = ParameterStore::new();
        for (name, value) in params {
            let Some(&(_, shape)) = expected.iter().find(|(n, _)| *n == name) else {
                return Err(Error::Checkpoint(format!("unexpected parameter `{name}`")));
            };
            if value.shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    value.shape()
                )));
            }
            store.add(name, value)?;
        }
        let get = |n: &str| store.id(n).ok_or_else(|| Error::Checkpoint(format!("missing `{n}`")));
        let ids = ParamIds {
            mean: get(STUDENT_MEAN)?,
            log_var: get(STUDENT_LOG_VAR)?,
            difficulty: get(EXERCISE_DIFFICULTY)?,
            discrimination: store.id(EXERCISE_DISCRIMINATION),
            ncd: match config.variant {
                Variant::Ncd => {
                    let mut layers = [(get("ncd_w1")?, get("ncd_b1")?); 3];
                    for (slot, (w, b)) in layers.iter_mut().zip(NCD_LAYERS) {
                        *slot = (get(w)?, get(b)?);
                    }
                    Some(layers)
                }
                _ => None,
            },
        };
        Ok(Self {
            config,
            dims,
            store,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Latent dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.config.latent_dim(self.dims.concepts)
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Parameter names and values in store order.
    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.store.ids().map(|id| (self.store.name(id), self.store.value(id)))
    }

    pub fn student_means(&self) -> &Matrix {
        self.store.value(self.ids.mean)
    }

    pub fn student_log_vars(&self) -> &Matrix {
        self.store.value(self.ids.log_var)
    }

    /// Replaces every negative NCD weight by zero; biases are untouched.
    /// No-op for other variants.
    pub fn clamp_ncd_weights(&mut self) {
        if let Some(layers) = self.ids.ncd {
            for (w, _) in layers {
                clamp_nonnegative(self.store.value_mut(w));
            }
        }
    }
}

pub fn clamp_nonnegative(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
}

fn expected_shapes(config: &ModelConfig, dims: &Dims) -> Vec<(String, (usize, usize))> {
    let d = config.latent_dim(dims.concepts);
    let mut shapes = vec![
        (STUDENT_MEAN.to_owned(), (dims.students, d)),
        (STUDENT_LOG_VAR.to_owned(), (dims.students, d)),
        (EXERCISE_DIFFICULTY.to_owned(), (dims.exercises, d)),
    ];
    if config.variant != Variant::Mirt {
        shapes.push((EXERCISE_DISCRIMINATION.to_owned(), (dims.exercises, 1)));
    }
    if config.variant == Variant::Ncd {
        let widths = [dims.concepts, config.ncd_hidden[0], config.ncd_hidden[1], 1];
        for (l, (w, b)) in NCD_LAYERS.iter().enumerate() {
            shapes.push(((*w).to_owned(), (widths[l], widths[l + 1])));
            shapes.push(((*b).to_owned(), (1, widths[l + 1])));
        }
    }
    shapes
}
