use serde::{Deserialize, Serialize};

use super::{NumericsError, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let bad = |msg: &str| Err(NumericsError::BadAdamConfig(msg.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// All gradients are checked before anything is modified, so a non-finite
/// entry leaves the store untouched. On success the gradients are zeroed and
/// the step counter is incremented.
pub fn adam_step(store: &mut ParameterStore, cfg: &AdamConfig) -> Result<(), NumericsError> {
    for id in store.ids() {
        if let Some(index) = store.grad(id).as_slice().iter().position(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteGradient {
                param: store.name(id).to_owned(),
                index,
            });
        }
    }
    let t = store.bump_step() as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);
    for (_, value, grad, m, v) in store.slots_mut() {
        let it = value
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_mut_slice())
            .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
        for ((w, g), (m, v)) in it {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * *g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * *g * *g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            *g = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn scalar_store(w: f64) -> (ParameterStore, crate::numerics::ParamId) {
        let mut store = ParameterStore::new();
        let id = store.add("w", Matrix::from_vec(1, 1, vec![w])).unwrap();
        (store, id)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut store = ParameterStore::new();
        let id = store
            .add("w", Matrix::from_vec(2, 2, vec![0.3, -1.0, 2.0, 5.5]))
            .unwrap();
        let before = store.value(id).clone();
        adam_step(&mut store, &AdamConfig::default()).unwrap();
        assert_eq!(store.value(id), &before);
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let (mut store, id) = scalar_store(1.0);
        store.grad_mut(id).set(0, 0, 1.0);
        adam_step(&mut store, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let delta = 1.0 - store.value(id).get(0, 0);
        assert!((delta - cfg.learning_rate).abs() <= cfg.learning_rate * cfg.epsilon);
        assert_eq!(store.grad(id).get(0, 0), 0.0);
    }

    #[test]
    fn moment_recursion_over_two_steps() {
        let cfg = AdamConfig::default();
        let (mut store, id) = scalar_store(0.0);
        let g = 0.5;
        for _ in 0..2 {
            store.grad_mut(id).set(0, 0, g);
            adam_step(&mut store, &cfg).unwrap();
        }
        assert_eq!(store.step(), 2);
        let (m, v) = store.moments(id);
        let v_expected = cfg.beta2 * (1.0 - cfg.beta2) * g * g + (1.0 - cfg.beta2) * g * g;
        let m_expected = cfg.beta1 * (1.0 - cfg.beta1) * g + (1.0 - cfg.beta1) * g;
        assert!((v.get(0, 0) - v_expected).abs() < 1e-18);
        assert!((m.get(0, 0) - m_expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut store, id) = scalar_store(1.0);
        store.grad_mut(id).set(0, 0, f64::NAN);
        let err = adam_step(&mut store, &AdamConfig::default()).unwrap_err();
        assert_eq!(
            err,
            NumericsError::NonFiniteGradient {
                param: "w".into(),
                index: 0
            }
        );
        assert_eq!(store.step(), 0);
        assert_eq!(store.value(id).get(0, 0), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
