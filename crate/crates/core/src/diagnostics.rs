//! Exercise factors and the three diagnostic functions (IRT, MIRT, NCD)
//! that map an ability vector to a probability of a correct response.

use serde::{Deserialize, Serialize};

use crate::data::QMatrix;
use crate::model::Model;
use crate::numerics::{stable_sigmoid, Matrix, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Irt,
    Mirt,
    Ncd,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "irt" => Ok(Variant::Irt),
            "mirt" => Ok(Variant::Mirt),
            "ncd" => Ok(Variant::Ncd),
            _ => Err(format!("unknown variant {s:?} (expected irt, mirt or ncd)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Irt => "irt",
            Variant::Mirt => "mirt",
            Variant::Ncd => "ncd",
        })
    }
}

/// Sigmoid-squashed difficulty vector and discrimination of one exercise.
#[derive(Clone, Debug, PartialEq)]
pub struct ExerciseParams {
    pub difficulty: Vec<f64>,
    pub discrimination: f64,
}

/// Borrowed NCD layers, `(weight in x out, bias 1 x out)`.
#[derive(Clone, Copy, Debug)]
pub struct NcdNet<'a> {
    pub layers: [(&'a Matrix, &'a Matrix); 3],
}

impl<'a> NcdNet<'a> {
    pub fn of(model: &'a Model) -> Option<Self> {
        let ids = model.ids.ncd?;
        let s = model.store();
        Some(Self {
            layers: ids.map(|(w, b)| (s.value(w), s.value(b))),
        })
    }
}

/// For MIRT the discrimination is fixed to 1.
pub fn exercise_params(model: &Model, exercise: usize) -> Result<ExerciseParams> {
    let m = model.dims().exercises;
    if exercise >= m {
        return Err(Error::IndexOutOfRange {
            what: "exercise",
            index: exercise,
            len: m,
        });
    }
    let store = model.store();
    let difficulty = store
        .value(model.ids.difficulty)
        .row(exercise)
        .iter()
        .map(|&x| stable_sigmoid(x))
        .collect();
    let discrimination = match model.ids.discrimination {
        Some(id) => stable_sigmoid(store.value(id).get(exercise, 0)),
        None => 1.0,
    };
    Ok(ExerciseParams {
        difficulty,
        discrimination,
    })
}

/// `1 / (1 + exp(-D * discrimination * (theta - difficulty)))`.
pub fn predict_irt(theta: f64, difficulty: f64, discrimination: f64, scale: f64) -> f64 {
    stable_sigmoid(scale * discrimination * (theta - difficulty))
}

/// `sigmoid(sum_l q_l * (theta_l - difficulty_l))`.
pub fn predict_mirt(theta: &[f64], difficulty: &[f64], q_row: &[f64]) -> f64 {
    let logit = theta
        .iter()
        .zip(difficulty)
        .zip(q_row)
        .map(|((t, a), q)| q * (t - a))
        .sum();
    stable_sigmoid(logit)
}

/// Three affine+sigmoid layers applied to `q ∘ (theta - difficulty) * discrimination`.
pub fn predict_ncd(
    theta: &[f64],
    difficulty: &[f64],
    discrimination: f64,
    q_row: &[f64],
    net: &NcdNet<'_>,
) -> f64 {
    let mut x: Vec<f64> = theta
        .iter()
        .zip(difficulty)
        .zip(q_row)
        .map(|((t, a), q)| q * (t - a) * discrimination)
        .collect();
    for (w, b) in net.layers {
        let mut out = b.row(0).to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (o, &wv) in out.iter_mut().zip(w.row(i)) {
                    *o += xi * wv;
                }
            }
        }
        out.iter_mut().for_each(|o| *o = stable_sigmoid(*o));
        x = out;
    }
    x[0]
}

/// Probability of a correct response for a given ability vector `theta`.
pub fn predict(model: &Model, theta: &[f64], exercise: usize, q: &QMatrix) -> Result<f64> {
    let ex = exercise_params(model, exercise)?;
    Ok(match model.variant() {
        Variant::Irt => predict_irt(theta[0], ex.difficulty[0], ex.discrimination, model.config().irt_scale),
        Variant::Mirt => predict_mirt(theta, &ex.difficulty, &q.mask_row(exercise)),
        Variant::Ncd => predict_ncd(
            theta,
            &ex.difficulty,
            ex.discrimination,
            &q.mask_row(exercise),
            &NcdNet::of(model).expect("ncd model has layers"),
        ),
    })
}

/// Records the diagnostic function for a batch on the tape. `theta` is a
/// `B x d` node; returns the `B x 1` probabilities.
pub(crate) fn predict_nodes(
    tape: &mut Tape,
    model: &Model,
    theta: Var,
    exercises: &[usize],
    q: &QMatrix,
) -> Var {
    let store = model.store();
    let raw = tape.gather(store, model.ids.difficulty, exercises);
    let difficulty = tape.sigmoid(raw);
    let gap = tape.sub(theta, difficulty);
    let discrimination = model.ids.discrimination.map(|id| {
        let raw = tape.gather(store, id, exercises);
        tape.sigmoid(raw)
    });
    let q_mask = || -> Vec<f64> { exercises.iter().flat_map(|&j| q.mask_row(j)).collect() };
    let logit = match model.variant() {
        Variant::Irt => {
            let scaled = tape.mul(gap, discrimination.expect("irt has discrimination"));
            tape.scale(scaled, model.config().irt_scale)
        }
        Variant::Mirt => {
            let masked = tape.mul_const(gap, q_mask());
            tape.sum_rows(masked)
        }
        Variant::Ncd => {
            let masked = tape.mul_const(gap, q_mask());
            let mut x = tape.mul_col(masked, discrimination.expect("ncd has discrimination"));
            let layers = model.ids.ncd.expect("ncd has layers");
            for (l, (w, b)) in layers.iter().enumerate() {
                let wv = tape.param(store, *w);
                let bv = tape.param(store, *b);
                let h = tape.matmul(x, wv);
                let h = tape.add_row(h, bv);
                x = if l + 1 < layers.len() { tape.sigmoid(h) } else { h };
            }
            x
        }
    };
    tape.sigmoid(logit)
}
