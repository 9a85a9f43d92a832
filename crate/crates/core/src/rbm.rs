//! RBM parameter container plus the inference primitives defined on it:
//! joint energy, the factorized conditionals in both directions, and free
//! energy.
//!
//! An RBM couples a visible layer of `num_visible` units to a hidden layer
//! of `num_hidden` units through a weight matrix, with per-unit biases on
//! both sides. A discriminative RBM additionally carries a one-hot softmax
//! label block wired into the same hidden layer, which is what classifiers
//! are built from.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log1p_exp, logit, sigmoid, RngStream};

/// How a layer's units behave when sampled.
///
/// `Binary` units take states in {0, 1}. `Probability` units use the same
/// activation expressions but pass the activation value through unsampled
/// (mean-field states in [0, 1]). `Gaussian` units are linear with unit
/// variance and are only valid on the visible side; inputs are expected to
/// be z-score normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitType {
    Binary,
    Probability,
    Gaussian,
}

/// Softmax label units of a discriminative RBM: `weights` is
/// `num_classes x num_hidden`, `biases` has one entry per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBlock {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LabelBlock {
    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }
}

/// Parameters of one RBM: weights (`num_visible x num_hidden`), visible and
/// hidden biases, unit types, and the optional label block.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParameters {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_type: UnitType,
    pub hidden_type: UnitType,
    pub label_block: Option<LabelBlock>,
}

impl RbmParameters {
    /// Freshly initialized parameters.
    ///
    /// Weights (and label weights) start at `Normal(0, 0.01^2)`, biases at
    /// zero. When training data is supplied and the visible units are
    /// Binary/Probability, each visible bias is set to `logit(p)` of that
    /// feature's training mean, with the mean clipped to [0.05, 0.95].
    pub fn init(
        num_visible: usize,
        num_hidden: usize,
        visible_type: UnitType,
        hidden_type: UnitType,
        num_classes: Option<usize>,
        train_data: Option<&Array2<f64>>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if num_visible == 0 || num_hidden == 0 {
            return Err(Error::invalid("unit counts must be at least 1"));
        }
        if hidden_type == UnitType::Gaussian {
            return Err(Error::invalid("Gaussian units are visible-only"));
        }
        if let Some(c) = num_classes {
            if c < 2 {
                return Err(Error::invalid(format!(
                    "a discriminative RBM needs at least 2 classes, got {c}"
                )));
            }
        }
        if let Some(data) = train_data {
            if data.ncols() != num_visible {
                return Err(Error::shape(format!(
                    "train data has {} features, expected {num_visible}",
                    data.ncols()
                )));
            }
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("train data contains non-finite values"));
            }
        }

        let mut weights = Array2::zeros((num_visible, num_hidden));
        for w in weights.iter_mut() {
            *w = 0.01 * rng.next_gaussian();
        }

        let mut visible_bias = Array1::zeros(num_visible);
        if let Some(data) = train_data {
            let bias_from_means = matches!(visible_type, UnitType::Binary | UnitType::Probability)
                && data.nrows() > 0;
            if bias_from_means {
                for (i, col) in data.axis_iter(Axis(1)).enumerate() {
                    let mean = col.mean().unwrap().clamp(0.05, 0.95);
                    visible_bias[i] = logit(mean);
                }
            }
        }

        let label_block = num_classes.map(|c| {
            let mut label_weights = Array2::zeros((c, num_hidden));
            for w in label_weights.iter_mut() {
                *w = 0.01 * rng.next_gaussian();
            }
            LabelBlock {
                weights: label_weights,
                biases: Array1::zeros(c),
            }
        });

        Ok(RbmParameters {
            weights,
            visible_bias,
            hidden_bias: Array1::zeros(num_hidden),
            visible_type,
            hidden_type,
            label_block,
        })
    }

    pub fn num_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.label_block.as_ref().map(LabelBlock::num_classes)
    }

    pub fn is_discriminative(&self) -> bool {
        self.label_block.is_some()
    }

    /// Largest parameter magnitude across all blocks.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for w in self
            .weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
        {
            m = m.max(w.abs());
        }
        if let Some(lb) = &self.label_block {
            for w in lb.weights.iter().chain(lb.biases.iter()) {
                m = m.max(w.abs());
            }
        }
        m
    }

    fn check_batch(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.num_visible() {
            return Err(Error::shape(format!(
                "batch has {} columns, model has {} visible units",
                batch.ncols(),
                self.num_visible()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, rows: usize, labels: Option<&Array2<f64>>) -> Result<()> {
        if let Some(y) = labels {
            let block = self
                .label_block
                .as_ref()
                .ok_or_else(|| Error::invalid("labels supplied to a non-discriminative RBM"))?;
            if y.nrows() != rows || y.ncols() != block.num_classes() {
                return Err(Error::shape(format!(
                    "label matrix is {}x{}, expected {rows}x{}",
                    y.nrows(),
                    y.ncols(),
                    block.num_classes()
                )));
            }
        }
        Ok(())
    }
}

/// Joint energy of one configuration.
///
/// Binary/Probability visibles: `-v'Wh - a'v - b'h`. Gaussian visibles:
/// `sum_i (v_i - a_i)^2 / 2 - b'h - v'Wh`.
pub fn energy(params: &RbmParameters, visible: &Array1<f64>, hidden: &Array1<f64>) -> Result<f64> {
    if visible.len() != params.num_visible() || hidden.len() != params.num_hidden() {
        return Err(Error::shape(format!(
            "state is {}/{}, model is {}/{}",
            visible.len(),
            hidden.len(),
            params.num_visible(),
            params.num_hidden()
        )));
    }
    let interaction = visible.dot(&params.weights.dot(hidden));
    let hidden_term = params.hidden_bias.dot(hidden);
    let visible_term = match params.visible_type {
        UnitType::Gaussian => {
            let diff = visible - &params.visible_bias;
            -diff.dot(&diff) / 2.0
        }
        _ => params.visible_bias.dot(visible),
    };
    Ok(-interaction - visible_term - hidden_term)
}

/// Hidden activation probabilities for a batch of visible rows, one output
/// row per input row.
///
/// Entry `(r, j)` is `sigmoid(b_j + sum_i V[r,i] W[i,j])`, plus the label
/// contribution `sum_y Y[r,y] U[y,j]` when one-hot labels are given.
pub fn hidden_probs(
    params: &RbmParameters,
    batch: &Array2<f64>,
    labels: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    params.check_batch(batch)?;
    params.check_labels(batch.nrows(), labels)?;
    let mut act = batch.dot(&params.weights) + &params.hidden_bias;
    if let Some(y) = labels {
        act += &y.dot(&params.label_block.as_ref().unwrap().weights);
    }
    act.mapv_inplace(sigmoid);
    Ok(act)
}

/// Visible activations for a batch of hidden rows, plus the label softmax
/// for discriminative RBMs.
///
/// Binary/Probability visibles: `sigmoid(a_i + sum_j H[r,j] W[i,j])`.
/// Gaussian visibles: the conditional mean `a_i + sum_j H[r,j] W[i,j]`.
pub fn visible_probs(
    params: &RbmParameters,
    hidden: &Array2<f64>,
) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    if hidden.ncols() != params.num_hidden() {
        return Err(Error::shape(format!(
            "hidden batch has {} columns, model has {} hidden units",
            hidden.ncols(),
            params.num_hidden()
        )));
    }
    let mut act = hidden.dot(&params.weights.t()) + &params.visible_bias;
    if params.visible_type != UnitType::Gaussian {
        act.mapv_inplace(sigmoid);
    }
    let label_softmax = match &params.label_block {
        Some(block) => {
            let logits = hidden.dot(&block.weights.t()) + &block.biases;
            Some(softmax_rows(logits))
        }
        None => None,
    };
    Ok((act, label_softmax))
}

/// Row-wise softmax, stabilized by subtracting the row maximum.
pub fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    logits
}

/// Free energy of each visible row: the negative log of the
/// hidden-marginalized unnormalized probability.
///
/// `F(v) = -sum_i v_i a_i - sum_j log(1 + exp(I_j))` with
/// `I_j = b_j + sum_i v_i w_ij`. With a one-hot label, `I_j` gains the
/// label row of the label weights and `-c_y` is added. Gaussian visibles
/// replace `-sum v_i a_i` with `sum (v_i - a_i)^2 / 2`. The log term uses
/// the overflow-free softplus.
pub fn free_energy(
    params: &RbmParameters,
    batch: &Array2<f64>,
    labels: Option<&Array2<f64>>,
) -> Result<Array1<f64>> {
    params.check_batch(batch)?;
    params.check_labels(batch.nrows(), labels)?;
    let mut input = batch.dot(&params.weights) + &params.hidden_bias;
    if let Some(y) = labels {
        input += &y.dot(&params.label_block.as_ref().unwrap().weights);
    }
    let softplus_sum = input.mapv(log1p_exp).sum_axis(Axis(1));

    let visible_term = match params.visible_type {
        UnitType::Gaussian => {
            let diff = batch - &params.visible_bias;
            diff.mapv(|d| d * d / 2.0).sum_axis(Axis(1))
        }
        _ => -batch.dot(&params.visible_bias),
    };

    let mut f = visible_term - softplus_sum;
    if let Some(y) = labels {
        f -= &y.dot(&params.label_block.as_ref().unwrap().biases);
    }
    Ok(f)
}

/// One-hot encoding of integer class labels.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((labels.len(), num_classes));
    for (r, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::invalid(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        out[[r, y]] = 1.0;
    }
    Ok(out)
}
