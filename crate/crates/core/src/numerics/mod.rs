//! Minimal differentiable-computation substrate: dense matrices, a parameter
//! store with Adam state, a reverse-mode tape over a closed set of operations,
//! and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod store;
mod tape;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{grad_check, GradCheck, GradCheckOptions};
pub use store::{ParamId, ParameterStore};
pub use tape::{Tape, Var};

/// Exponent arguments are clamped to this magnitude.
pub const EXP_CLAMP: f64 = 30.0;
/// Logarithm arguments are floored at this value.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("xavier_init needs positive fan dimensions, got fan_in={fan_in}, fan_out={fan_out}")]
    ZeroFan { fan_in: usize, fan_out: usize },
    #[error("non-finite gradient in parameter `{param}` at entry {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("non-finite objective while perturbing parameter `{param}` at entry {index}")]
    Divergence { param: String, index: usize },
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("invalid Adam configuration: {0}")]
    BadAdamConfig(String),
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    BadStep(f64),
}

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length does not match {rows}x{cols}"
        );
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }
}

/// Logistic function evaluated without overflow for any finite input.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `fan_in x fan_out` matrix with entries i.i.d. uniform on `[-b, b]`,
/// `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<Matrix, NumericsError> {
    if fan_in == 0 || fan_out == 0 {
        return Err(NumericsError::ZeroFan { fan_in, fan_out });
    }
    let bound = xavier_bound(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Ok(Matrix::from_vec(fan_in, fan_out, data))
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
