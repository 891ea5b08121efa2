use rand::seq::index::sample;

use super::{NumericsError, ParameterStore};
use crate::rng::seeded;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step, within `[1e-6, 1e-3]`.
    pub h: f64,
    /// Check at most this many randomly chosen entries per parameter.
    pub max_entries_per_param: Option<usize>,
    /// Denominator floor of the relative error, so gradients that are
    /// numerically zero compare in absolute terms.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_entries_per_param: None,
            denominator_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Parameter and flat entry index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// Compares analytic gradients against central finite differences.
///
/// `f` must evaluate the objective at the store's current values and *add*
/// its gradient into the store's accumulators; the checker zeroes them
/// before each call. Values are restored afterwards and the accumulators
/// are left holding the analytic gradient.
pub fn grad_check<F>(
    mut f: F,
    store: &mut ParameterStore,
    opts: &GradCheckOptions,
) -> Result<GradCheck, NumericsError>
where
    F: FnMut(&mut ParameterStore) -> f64,
{
    if !(1e-6..=1e-3).contains(&opts.h) {
        return Err(NumericsError::BadStep(opts.h));
    }
    store.zero_grads();
    f(store);
    let analytic: Vec<_> = store.ids().map(|id| store.grad(id).clone()).collect();

    let mut rng = seeded(opts.seed);
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for (id, grad) in store.ids().collect::<Vec<_>>().into_iter().zip(&analytic) {
        let n = grad.len();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for index in entries {
            let original = store.value(id).as_slice()[index];
            let mut eval_at = |store: &mut ParameterStore, w: f64| {
                store.value_mut(id).as_mut_slice()[index] = w;
                store.zero_grads();
                f(store)
            };
            let plus = eval_at(store, original + opts.h);
            let minus = eval_at(store, original - opts.h);
            store.value_mut(id).as_mut_slice()[index] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::Divergence {
                    param: store.name(id).to_owned(),
                    index,
                });
            }
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = grad.as_slice()[index];
            let denom = a.abs().max(numeric.abs()).max(opts.denominator_floor);
            let rel = (a - numeric).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() && rel.is_nan() {
                report.max_relative_error = rel;
                report.worst = Some((store.name(id).to_owned(), index));
            }
        }
    }
    store.zero_grads();
    for (id, grad) in store.ids().collect::<Vec<_>>().into_iter().zip(analytic) {
        *store.grad_mut(id) = grad;
    }
    Ok(report)
}
