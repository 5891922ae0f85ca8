//! Central finite-difference gradient checking.
//!
//! The checker perturbs randomly chosen parameter coordinates of a store,
//! re-evaluates a scalar loss, and compares the central difference against
//! the analytic gradient produced by the tape. It is an independent oracle:
//! nothing here reuses the backward pass it verifies.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with a noise floor: when both gradients sit below the
/// floor they are indistinguishable from zero at the working precision and
/// count as matching.
fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    if a.abs() < floor && n.abs() < floor {
        return 0.0;
    }
    (a - n).abs() / a.abs().max(n.abs())
}

/// Check `probes` random parameter coordinates of `store` against central
/// finite differences of `loss`.
///
/// * `analytic` are the tape gradients for the same store and loss.
/// * `h_rel` controls the step: `h = h_rel * max(1, |theta|)`.
/// * `floor` is the noise floor: a pair of gradients both below it counts
///   as matching (they are unresolvable at the working precision).
pub fn check_store<S: Scalar>(
    store: &ParameterStore<S>,
    analytic: &BTreeMap<String, Tensor<S>>,
    loss: &mut dyn FnMut(&ParameterStore<S>) -> f64,
    probes: usize,
    h_rel: f64,
    floor: f64,
    rng: &mut ChaCha8Rng,
) -> GradCheckReport {
    check_store_resolvable(store, analytic, loss, probes, h_rel, floor, 0.0, rng)
}

/// As [`check_store`], but probing only coordinates whose analytic gradient
/// magnitude is at least `min_grad_fraction` of the largest one. Finite
/// differences at 32-bit working precision cannot resolve relative error on
/// coordinates far below the dominant gradient scale; restricting the probe
/// pool keeps the comparison meaningful there.
#[allow(clippy::too_many_arguments)]
pub fn check_store_resolvable<S: Scalar>(
    store: &ParameterStore<S>,
    analytic: &BTreeMap<String, Tensor<S>>,
    loss: &mut dyn FnMut(&ParameterStore<S>) -> f64,
    probes: usize,
    h_rel: f64,
    floor: f64,
    min_grad_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> GradCheckReport {
    let max_grad = analytic
        .values()
        .flat_map(|t| t.data().iter().map(|v| v.to_f().abs()))
        .fold(0.0f64, f64::max);
    let threshold = min_grad_fraction * max_grad;
    let mut coords: Vec<(String, usize)> = store
        .iter_trainable()
        .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.clone(), i)))
        .filter(|(name, i)| {
            threshold == 0.0
                || analytic
                    .get(name)
                    .map(|g| g.data()[*i].to_f().abs() >= threshold)
                    .unwrap_or(false)
        })
        .collect();
    if coords.is_empty() {
        coords = store
            .iter_trainable()
            .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.clone(), i)))
            .collect();
    }
    assert!(!coords.is_empty(), "store has no trainable coordinates");

    let mut max_rel = 0.0f64;
    let mut worst = None;
    for _ in 0..probes {
        let (name, idx) = coords[rng.gen_range(0..coords.len())].clone();
        let theta = store.get(&name).expect("probe name").data()[idx].to_f();
        let h = h_rel * theta.abs().max(1.0);

        let mut eval = |delta: f64| -> f64 {
            let mut probe_store = store.clone();
            let t = probe_store.get(&name).expect("probe name").clone();
            let mut data: Vec<S> = t.data().to_vec();
            data[idx] = S::from_f(theta + delta);
            probe_store
                .set(&name, Tensor::from_vec(t.shape().to_vec(), data))
                .expect("probe set");
            loss(&probe_store)
        };

        let plus = eval(h);
        let minus = eval(-h);
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic
            .get(&name)
            .unwrap_or_else(|| panic!("no analytic gradient for {name}"))
            .data()[idx]
            .to_f();
        let e = rel_err(a, numeric, floor);
        if e > max_rel {
            max_rel = e;
            worst = Some((name.clone(), idx, a, numeric));
        }
    }
    GradCheckReport {
        probes,
        max_rel_err: max_rel,
        worst,
    }
}
