//! Exact enumeration over all unit configurations of small binary RBMs.
//!
//! Everything here is ground truth for the test suite: partition function,
//! marginals, model expectations, the exact log-likelihood gradient, and
//! the label posterior. Costs are exponential, so every entry point checks
//! an explicit bit budget first. All accumulation happens in the log
//! domain; raw exponentials are never multiplied.
//!
//! Where possible the hidden layer is marginalized analytically through
//! the free-energy product form, which cuts enumeration from
//! `2^(v+h)` joint states to `2^v` visible states.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, sigmoid};
use crate::rbm::{energy, free_energy, hidden_probs, one_hot, RbmParameters, UnitType};
use crate::training::{positive_phase, GradientStats};

/// Enumeration budget: `num_visible + num_hidden` (plus `log2` of the
/// class count for discriminative models) may not exceed `max_total_bits`.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub max_total_bits: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_total_bits: 20 }
    }
}

fn check_enumerable(params: &RbmParameters, limits: OracleLimits) -> Result<()> {
    if params.visible_type != UnitType::Binary || params.hidden_type != UnitType::Binary {
        return Err(Error::invalid(
            "exact enumeration supports binary units only",
        ));
    }
    let label_bits = match params.num_classes() {
        Some(c) => (c as f64).log2().ceil() as usize,
        None => 0,
    };
    let bits = params.num_visible() + params.num_hidden() + label_bits;
    if bits > limits.max_total_bits {
        return Err(Error::EnumerationLimit(format!(
            "model needs {bits} bits, limit is {}",
            limits.max_total_bits
        )));
    }
    Ok(())
}

/// All `2^n` binary vectors of length `n`, in increasing integer order with
/// bit 0 mapped to coordinate 0.
fn binary_states(n: usize) -> impl Iterator<Item = Array1<f64>> {
    (0u64..(1u64 << n)).map(move |code| Array1::from_shape_fn(n, |i| f64::from(code >> i & 1 == 1)))
}

/// Matrix whose rows are all `2^n` binary vectors of length `n`.
pub fn all_binary_rows(n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((1 << n, n));
    for (r, v) in binary_states(n).enumerate() {
        out.row_mut(r).assign(&v);
    }
    out
}

/// `log Z`: the log partition function, `log sum_v sum_h exp(-E(v, h))`,
/// accumulated as `log sum_v exp(-F(v))` over all visible states (and all
/// labels for discriminative models).
pub fn exact_log_z(params: &RbmParameters, limits: OracleLimits) -> Result<f64> {
    check_enumerable(params, limits)?;
    let states = all_binary_rows(params.num_visible());
    let mut log_z = f64::NEG_INFINITY;
    match params.num_classes() {
        None => {
            for &f in free_energy(params, &states, None)?.iter() {
                log_z = log_add_exp(log_z, -f);
            }
        }
        Some(classes) => {
            for y in 0..classes {
                let labels = one_hot(&vec![y; states.nrows()], classes)?;
                for &f in free_energy(params, &states, Some(&labels))?.iter() {
                    log_z = log_add_exp(log_z, -f);
                }
            }
        }
    }
    Ok(log_z)
}

/// Exact marginal probability of one visible vector,
/// `P(v) = sum_h exp(-E(v, h)) / Z = exp(-F(v) - log Z)`.
pub fn exact_pv(
    params: &RbmParameters,
    visible: &Array1<f64>,
    limits: OracleLimits,
) -> Result<f64> {
    let log_z = exact_log_z(params, limits)?;
    let batch = visible.clone().insert_axis(ndarray::Axis(0));
    let f = free_energy(params, &batch, None)?;
    Ok((-f[0] - log_z).exp())
}

/// Exact model expectations `E[v_i h_j]`, `E[v_i]`, `E[h_j]` under the
/// joint distribution, via weighted enumeration of visible states with the
/// hidden layer marginalized analytically.
pub fn exact_model_stats(params: &RbmParameters, limits: OracleLimits) -> Result<GradientStats> {
    check_enumerable(params, limits)?;
    if params.is_discriminative() {
        return Err(Error::invalid(
            "exact model statistics are defined for generative RBMs",
        ));
    }
    let log_z = exact_log_z(params, limits)?;
    let states = all_binary_rows(params.num_visible());
    let f = free_energy(params, &states, None)?;
    let h = hidden_probs(params, &states, None)?;

    let mut stats = GradientStats::zeros_like(params);
    for (r, state) in states.rows().into_iter().enumerate() {
        let p = (-f[r] - log_z).exp();
        let h_row = h.row(r);
        for (i, &v) in state.iter().enumerate() {
            if v != 0.0 {
                stats.visible[i] += p;
                for (j, &hj) in h_row.iter().enumerate() {
                    stats.weights[[i, j]] += p * hj;
                }
            }
        }
        for (j, &hj) in h_row.iter().enumerate() {
            stats.hidden[j] += p * hj;
        }
    }
    Ok(stats)
}

/// Exact gradient of the mean train log-likelihood: the data-side
/// statistics of `dataset` minus the exact model expectations.
pub fn exact_gradient(
    params: &RbmParameters,
    dataset: &Array2<f64>,
    limits: OracleLimits,
) -> Result<GradientStats> {
    let pos = positive_phase(params, dataset, None)?;
    let model = exact_model_stats(params, limits)?;
    Ok(pos.minus(&model))
}

/// Exact class posterior `P(y | v)` of a discriminative RBM, computed by
/// trying every label: `P(y | v) proportional to exp(-F(v, y))`.
pub fn exact_label_posterior(
    params: &RbmParameters,
    visible: &Array1<f64>,
    limits: OracleLimits,
) -> Result<Array1<f64>> {
    check_enumerable(params, limits)?;
    let classes = params
        .num_classes()
        .ok_or_else(|| Error::invalid("label posterior needs a discriminative RBM"))?;
    let batch = visible.clone().insert_axis(ndarray::Axis(0));
    let mut neg_f = Array1::zeros(classes);
    for y in 0..classes {
        let labels = one_hot(&[y], classes)?;
        neg_f[y] = -free_energy(params, &batch, Some(&labels))?[0];
    }
    let log_norm = neg_f
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &x| log_add_exp(acc, x));
    Ok(neg_f.mapv(|x| (x - log_norm).exp()))
}

/// Mean exact log-likelihood of a binary dataset,
/// `(1/m) sum_l log P(v_l)`.
pub fn exact_log_likelihood(
    params: &RbmParameters,
    dataset: &Array2<f64>,
    limits: OracleLimits,
) -> Result<f64> {
    check_enumerable(params, limits)?;
    if dataset.nrows() == 0 {
        return Err(Error::invalid("log-likelihood of an empty dataset"));
    }
    let log_z = exact_log_z(params, limits)?;
    let f = free_energy(params, dataset, None)?;
    Ok(f.iter().map(|&fi| -fi - log_z).sum::<f64>() / dataset.nrows() as f64)
}

/// `P(h_j = 1 | v)` by raw enumeration of all hidden configurations with
/// Boltzmann weights. Deliberately avoids the free-energy product form so
/// it stays an independent check on [`hidden_probs`].
pub fn exact_hidden_conditional(
    params: &RbmParameters,
    visible: &Array1<f64>,
    limits: OracleLimits,
) -> Result<Array1<f64>> {
    check_enumerable(params, limits)?;
    let num_hidden = params.num_hidden();
    let mut log_total = f64::NEG_INFINITY;
    let mut log_on = Array1::from_elem(num_hidden, f64::NEG_INFINITY);
    for h in binary_states(num_hidden) {
        let log_w = -energy(params, visible, &h)?;
        log_total = log_add_exp(log_total, log_w);
        for j in 0..num_hidden {
            if h[j] == 1.0 {
                log_on[j] = log_add_exp(log_on[j], log_w);
            }
        }
    }
    Ok(log_on.mapv(|x| (x - log_total).exp()))
}

/// Free energy in the entropy form: `-sum_i v_i a_i - sum_j q_j I_j +
/// sum_j (q_j log q_j + (1 - q_j) log(1 - q_j))` with `q_j = sigmoid(I_j)`.
///
/// Algebraically identical to [`free_energy`]; kept as an alternate route
/// for the identity tests. Saturated units contribute `0 log 0 = 0`.
pub fn free_energy_entropy_form(
    params: &RbmParameters,
    batch: &Array2<f64>,
) -> Result<Array1<f64>> {
    fn xlogx(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            x * x.ln()
        }
    }
    let input = batch.dot(&params.weights) + &params.hidden_bias;
    let visible_term = match params.visible_type {
        UnitType::Gaussian => {
            let diff = batch - &params.visible_bias;
            diff.mapv(|d| d * d / 2.0).sum_axis(ndarray::Axis(1))
        }
        _ => -batch.dot(&params.visible_bias),
    };
    let mut out = Array1::zeros(batch.nrows());
    for (r, row) in input.rows().into_iter().enumerate() {
        let mut acc = visible_term[r];
        for &i in row.iter() {
            let q = sigmoid(i);
            acc += -q * i + xlogx(q) + xlogx(1.0 - q);
        }
        out[r] = acc;
    }
    Ok(out)
}
