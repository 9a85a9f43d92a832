//! RBM stacks: greedy layer-wise pretraining, feature extraction,
//! generation, reconstruction, classification, conversion to a plain
//! feed-forward network, and backpropagation fine-tuning.
//!
//! A [`Dbn`] is an ordered list of RBMs whose dimensions chain (layer t's
//! hidden count equals layer t+1's visible count), tagged as either an
//! `AutoEncoder` (all layers generative) or a `Classifier` (last layer
//! discriminative). Pretrained parameters are never overwritten by
//! fine-tuning; the fine-tuned feed-forward net lives alongside them.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DataStore;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::rbm::{
    free_energy, hidden_probs, one_hot, softmax_rows, visible_probs, RbmParameters, UnitType,
};
use crate::sampling;

/// What a DBN is for; decides the final layer's role and the shape of the
/// fine-tuned network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbnKind {
    AutoEncoder,
    Classifier,
}

/// Activation of one feed-forward layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Logistic,
    Softmax,
    Linear,
}

/// One dense feed-forward layer: `inputs x outputs` weights plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    fn apply(&self, input: &Array2<f64>) -> Array2<f64> {
        let z = input.dot(&self.weights) + &self.biases;
        match self.activation {
            Activation::Logistic => z.mapv(crate::numerics::sigmoid),
            Activation::Softmax => softmax_rows(z),
            Activation::Linear => z,
        }
    }
}

/// A plain feed-forward network. At most one softmax layer is allowed and
/// only in the last position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedForwardNet {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer `(weight, bias)` gradients, in layer order.
pub type LayerGradients = Vec<(Array2<f64>, Array1<f64>)>;

/// Loss minimized by [`backprop_fine_tune`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Cross-entropy against one-hot targets (softmax output).
    CrossEntropy,
    /// Per-element mean squared error.
    MeanSquared,
}

impl FeedForwardNet {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("feed-forward net has no layers"));
        }
        for (t, layer) in self.layers.iter().enumerate() {
            if layer.weights.ncols() != layer.biases.len() {
                return Err(Error::shape(format!(
                    "net layer {t}: {} weight columns vs {} biases",
                    layer.weights.ncols(),
                    layer.biases.len()
                )));
            }
            if t + 1 < self.layers.len() {
                if layer.weights.ncols() != self.layers[t + 1].weights.nrows() {
                    return Err(Error::shape(format!(
                        "net layer {t} feeds {} units into a layer expecting {}",
                        layer.weights.ncols(),
                        self.layers[t + 1].weights.nrows()
                    )));
                }
                if layer.activation == Activation::Softmax {
                    return Err(Error::invalid("softmax is only allowed as the last layer"));
                }
            }
        }
        Ok(())
    }

    /// Random network for from-scratch training: weights `Normal(0, std^2)`,
    /// zero biases.
    pub fn random(
        sizes: &[usize],
        activations: &[Activation],
        std: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::invalid(
                "need n+1 sizes and n activations for an n-layer net",
            ));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let mut weights = Array2::zeros((pair[0], pair[1]));
                weights.mapv_inplace(|_: f64| std * rng.next_gaussian());
                DenseLayer {
                    weights,
                    biases: Array1::zeros(pair[1]),
                    activation,
                }
            })
            .collect();
        let net = FeedForwardNet { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.ncols())
    }

    /// Full forward pass.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.forward_through(input, self.layers.len())
    }

    /// Forward pass through the first `count` layers only.
    pub fn forward_through(&self, input: &Array2<f64>, count: usize) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, net expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let mut current = input.clone();
        for layer in &self.layers[..count] {
            current = layer.apply(&current);
        }
        Ok(current)
    }

    /// Mean batch loss under the given criterion.
    pub fn batch_loss(
        &self,
        input: &Array2<f64>,
        targets: &Array2<f64>,
        loss: LossKind,
    ) -> Result<f64> {
        let output = self.forward(input)?;
        loss_value(&output, targets, loss)
    }

    /// Mean batch loss together with the gradient of every layer's weights
    /// and biases, by reverse-mode accumulation.
    pub fn batch_gradients(
        &self,
        input: &Array2<f64>,
        targets: &Array2<f64>,
        loss: LossKind,
    ) -> Result<(f64, LayerGradients)> {
        if targets.ncols() != self.output_dim() || targets.nrows() != input.nrows() {
            return Err(Error::shape(format!(
                "targets are {}x{}, expected {}x{}",
                targets.nrows(),
                targets.ncols(),
                input.nrows(),
                self.output_dim()
            )));
        }
        // Forward, keeping every layer's activation.
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.apply(activations.last().unwrap());
            activations.push(next);
        }
        let output = activations.last().unwrap();
        let loss_val = loss_value(output, targets, loss)?;

        let n = input.nrows() as f64;
        // Gradient at the output pre-activation.
        let mut delta = match (loss, self.layers.last().unwrap().activation) {
            (LossKind::CrossEntropy, Activation::Softmax) => (output - targets) / n,
            (LossKind::CrossEntropy, _) => {
                return Err(Error::invalid(
                    "cross-entropy fine-tuning needs a softmax output layer",
                ))
            }
            (LossKind::MeanSquared, activation) => {
                let d_loss = 2.0 * (output - targets) / (n * targets.ncols() as f64);
                match activation {
                    Activation::Linear => d_loss,
                    Activation::Logistic => d_loss * &output.mapv(|a| a * (1.0 - a)),
                    Activation::Softmax => {
                        return Err(Error::invalid(
                            "mean-squared fine-tuning of a softmax output is not supported",
                        ))
                    }
                }
            }
        };

        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); self.layers.len()];
        for t in (0..self.layers.len()).rev() {
            let below = &activations[t];
            grads[t] = (below.t().dot(&delta), delta.sum_axis(Axis(0)));
            if t > 0 {
                let back = delta.dot(&self.layers[t].weights.t());
                delta = match self.layers[t - 1].activation {
                    Activation::Logistic => back * &activations[t].mapv(|a| a * (1.0 - a)),
                    Activation::Linear => back,
                    Activation::Softmax => unreachable!("softmax only in last position"),
                };
            }
        }
        Ok((loss_val, grads))
    }
}

fn loss_value(output: &Array2<f64>, targets: &Array2<f64>, loss: LossKind) -> Result<f64> {
    if output.dim() != targets.dim() {
        return Err(Error::shape(format!(
            "output is {:?}, targets are {:?}",
            output.dim(),
            targets.dim()
        )));
    }
    let n = output.nrows() as f64;
    Ok(match loss {
        LossKind::CrossEntropy => {
            let mut total = 0.0;
            for (out, tgt) in output.rows().into_iter().zip(targets.rows()) {
                for (&p, &t) in out.iter().zip(tgt.iter()) {
                    if t > 0.0 {
                        total -= t * p.max(1e-300).ln();
                    }
                }
            }
            total / n
        }
        LossKind::MeanSquared => {
            let diff = output - targets;
            diff.mapv(|d| d * d).sum() / (n * targets.ncols() as f64)
        }
    })
}

/// Fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackpropConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub epsilon: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for BackpropConfig {
    fn default() -> Self {
        BackpropConfig {
            epochs: 30,
            batch_size: 100,
            epsilon: 0.1,
            momentum: 0.5,
            seed: 0,
        }
    }
}

/// Per-epoch fine-tuning telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackpropEpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

/// An ordered RBM stack with a role tag and, after fine-tuning, a
/// feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Dbn {
    layers: Vec<RbmParameters>,
    kind: DbnKind,
    fine_tuned: Option<FeedForwardNet>,
}

impl Dbn {
    pub fn new(kind: DbnKind) -> Self {
        Dbn {
            layers: Vec::new(),
            kind,
            fine_tuned: None,
        }
    }

    /// Rebuilds a DBN from its parts, enforcing every stacking invariant;
    /// used by model loading.
    pub fn from_parts(
        kind: DbnKind,
        layers: Vec<RbmParameters>,
        fine_tuned: Option<FeedForwardNet>,
    ) -> Result<Self> {
        let mut dbn = Dbn::new(kind);
        for layer in layers {
            dbn.add_rbm(layer)?;
        }
        if kind == DbnKind::Classifier && !dbn.layers.is_empty() {
            dbn.top_label_block()?;
        }
        if let Some(net) = fine_tuned {
            net.validate()?;
            if net.input_dim() != dbn.layers[0].num_visible() {
                return Err(Error::shape(
                    "fine-tuned net input does not match first layer".to_string(),
                ));
            }
            dbn.fine_tuned = Some(net);
        }
        Ok(dbn)
    }

    /// Appends an RBM to the stack.
    ///
    /// The new layer's visible count must equal the current top layer's
    /// hidden count. Only a Classifier may hold a discriminative layer, and
    /// only as its final layer, so stacking on top of one is rejected.
    pub fn add_rbm(&mut self, layer: RbmParameters) -> Result<()> {
        if let Some(top) = self.layers.last() {
            if top.is_discriminative() {
                return Err(Error::invalid(
                    "cannot stack on top of a discriminative layer",
                ));
            }
            if top.num_hidden() != layer.num_visible() {
                return Err(Error::shape(format!(
                    "layer expects {} visible units, previous layer has {} hidden units",
                    layer.num_visible(),
                    top.num_hidden()
                )));
            }
        }
        if layer.is_discriminative() && self.kind == DbnKind::AutoEncoder {
            return Err(Error::invalid(
                "autoencoder layers cannot carry a label block",
            ));
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn kind(&self) -> DbnKind {
        self.kind
    }

    pub fn layers(&self) -> &[RbmParameters] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn fine_tuned(&self) -> Option<&FeedForwardNet> {
        self.fine_tuned.as_ref()
    }

    pub fn set_fine_tuned(&mut self, net: FeedForwardNet) -> Result<()> {
        net.validate()?;
        self.fine_tuned = Some(net);
        Ok(())
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.layers.last().and_then(RbmParameters::num_classes)
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("DBN has no layers"));
        }
        Ok(())
    }

    fn top_label_block(&self) -> Result<&RbmParameters> {
        self.require_nonempty()?;
        let top = self.layers.last().unwrap();
        if self.kind != DbnKind::Classifier || !top.is_discriminative() {
            return Err(Error::invalid(
                "operation needs a classifier DBN with a discriminative top layer",
            ));
        }
        Ok(top)
    }
}

/// Greedy layer-wise pretraining: layer 1 trains on the raw data, each
/// later layer on the hidden probabilities of the trained layer below
/// applied to that layer's input. A Classifier's final layer receives the
/// labels. Returns the epoch logs per layer.
pub fn train_layerwise(
    dbn: &mut Dbn,
    data: &DataStore,
    configs: &[crate::training::TrainConfig],
) -> Result<Vec<Vec<crate::training::EpochLog>>> {
    dbn.require_nonempty()?;
    if dbn.kind == DbnKind::Classifier {
        dbn.top_label_block()?;
    }
    if configs.len() != dbn.layers.len() {
        return Err(Error::invalid(format!(
            "{} layer configs for {} layers",
            configs.len(),
            dbn.layers.len()
        )));
    }
    let mut features = data.train.features.clone();
    let mut validation = data.validation.as_ref().map(|s| s.features.clone());
    let mut logs = Vec::with_capacity(dbn.layers.len());
    let layer_count = dbn.layers.len();
    for (t, config) in configs.iter().enumerate() {
        let is_top = t + 1 == layer_count;
        let layer = &mut dbn.layers[t];
        let labels = if layer.is_discriminative() {
            data.train.labels.clone()
        } else {
            None
        };
        let store = DataStore {
            train: crate::data::DataSplit::new(features.clone(), labels)?,
            validation: validation
                .as_ref()
                .map(|v| crate::data::DataSplit::unlabeled(v.clone())),
            test: None,
            normalization: crate::data::Normalization::none(),
        };
        logs.push(crate::training::train_rbm(layer, &store, config)?);
        if !is_top {
            features = hidden_probs(layer, &features, None)?;
            if let Some(v) = validation {
                validation = Some(hidden_probs(layer, &v, None)?);
            }
        }
    }
    Ok(logs)
}

/// Deterministic mean-field forward pass through every layer; returns the
/// top hidden activations. Classifier DBNs exclude the label block (labels
/// are unknown at feature time).
pub fn get_feature(dbn: &Dbn, input: &Array2<f64>) -> Result<Array2<f64>> {
    dbn.require_nonempty()?;
    let mut current = input.clone();
    for layer in &dbn.layers {
        current = hidden_probs(layer, &current, None)?;
    }
    Ok(current)
}

/// Generates visible configurations of one RBM from hidden states: the
/// first visible update comes straight from `hidden`, then `k - 1` more
/// full Gibbs steps run, and the final visible activation values
/// (probabilities / conditional means) are returned. One chain per row.
pub fn generate_data(
    layer: &RbmParameters,
    hidden: &Array2<f64>,
    k: usize,
    chain_seed: u64,
) -> Result<Array2<f64>> {
    if k == 0 {
        return Err(Error::invalid("need k >= 1 sampling iterations"));
    }
    sampling::run_from_hidden(layer, hidden, k, chain_seed)
}

/// Mean-field reconstruction: features up through every layer, then
/// visible activations back down through every layer in reverse. Fully
/// deterministic.
pub fn reconstruct_data(dbn: &Dbn, input: &Array2<f64>) -> Result<Array2<f64>> {
    let mut current = get_feature(dbn, input)?;
    for layer in dbn.layers.iter().rev() {
        current = visible_probs(layer, &current)?.0;
    }
    Ok(current)
}

/// Generates one sample of a given class: the one-hot label is clamped on
/// the top RBM while its visible block (randomly initialized) relaxes
/// through `k` Gibbs steps, and the resulting top-layer visible activation
/// propagates down through the lower layers mean-field.
pub fn generate_class(dbn: &Dbn, label: usize, k: usize, chain_seed: u64) -> Result<Array2<f64>> {
    let top = dbn.top_label_block()?;
    let classes = top.num_classes().unwrap();
    if label >= classes {
        return Err(Error::invalid(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    if k == 0 {
        return Err(Error::invalid("need k >= 1 sampling iterations"));
    }
    let clamped = one_hot(&[label], classes)?;
    let mut current = sampling::run_clamped_class(top, &clamped, k, chain_seed)?;
    for layer in dbn.layers.iter().rev().skip(1) {
        current = visible_probs(layer, &current)?.0;
    }
    Ok(current)
}

/// How [`predict_class`] scores candidate labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// Try every label and pick the one with the lowest top-layer free
    /// energy (more accurate, slower).
    ByFreeEnergy,
    /// One mean-field up-down pass on the top RBM; pick the most activated
    /// softmax unit.
    BySampling,
}

/// Predicts a class index per input row. Ties break toward the lowest
/// label index.
pub fn predict_class(dbn: &Dbn, input: &Array2<f64>, mode: PredictMode) -> Result<Vec<usize>> {
    let top = dbn.top_label_block()?;
    let classes = top.num_classes().unwrap();
    let mut features = input.clone();
    for layer in &dbn.layers[..dbn.layers.len() - 1] {
        features = hidden_probs(layer, &features, None)?;
    }
    let n = features.nrows();
    match mode {
        PredictMode::ByFreeEnergy => {
            let mut best = vec![0usize; n];
            let mut best_f = Array1::from_elem(n, f64::INFINITY);
            for y in 0..classes {
                let labels = one_hot(&vec![y; n], classes)?;
                let f = free_energy(top, &features, Some(&labels))?;
                for r in 0..n {
                    if f[r] < best_f[r] {
                        best_f[r] = f[r];
                        best[r] = y;
                    }
                }
            }
            Ok(best)
        }
        PredictMode::BySampling => {
            let h = hidden_probs(top, &features, None)?;
            let (_, label_softmax) = visible_probs(top, &h)?;
            let softmax = label_softmax.expect("discriminative top layer");
            Ok(softmax
                .rows()
                .into_iter()
                .map(|row| {
                    let mut arg = 0;
                    let mut best = f64::NEG_INFINITY;
                    for (y, &p) in row.iter().enumerate() {
                        if p > best {
                            best = p;
                            arg = y;
                        }
                    }
                    arg
                })
                .collect())
        }
    }
}

/// Converts a pretrained DBN into a feed-forward network.
///
/// Classifier: one logistic layer per RBM (its weights and hidden biases),
/// then a softmax output layer from the label block. AutoEncoder: the
/// logistic encoder layers followed by decoder layers in reverse order
/// using transposed weights and the visible biases; the reconstruction
/// layer is logistic, or linear for Gaussian visibles. Encoder and decoder
/// parameters are independent copies after conversion.
pub fn to_feed_forward(dbn: &Dbn) -> Result<FeedForwardNet> {
    dbn.require_nonempty()?;
    let mut layers = Vec::new();
    for rbm in &dbn.layers {
        layers.push(DenseLayer {
            weights: rbm.weights.clone(),
            biases: rbm.hidden_bias.clone(),
            activation: Activation::Logistic,
        });
    }
    match dbn.kind {
        DbnKind::Classifier => {
            let top = dbn.top_label_block()?;
            let block = top.label_block.as_ref().unwrap();
            layers.push(DenseLayer {
                weights: block.weights.t().to_owned(),
                biases: block.biases.clone(),
                activation: Activation::Softmax,
            });
        }
        DbnKind::AutoEncoder => {
            for rbm in dbn.layers.iter().rev() {
                let activation = if rbm.visible_type == UnitType::Gaussian {
                    Activation::Linear
                } else {
                    Activation::Logistic
                };
                layers.push(DenseLayer {
                    weights: rbm.weights.t().to_owned(),
                    biases: rbm.visible_bias.clone(),
                    activation,
                });
            }
        }
    }
    let net = FeedForwardNet { layers };
    net.validate()?;
    Ok(net)
}

/// Mini-batch gradient descent with momentum on the given network,
/// minimizing cross-entropy (Classifier) or per-element mean squared error
/// (AutoEncoder, targets = inputs). Returns per-epoch mean loss.
pub fn backprop_fine_tune(
    net: &mut FeedForwardNet,
    data: &DataStore,
    kind: DbnKind,
    config: &BackpropConfig,
) -> Result<Vec<BackpropEpochLog>> {
    net.validate()?;
    if !(config.epsilon.is_finite() && config.epsilon > 0.0) {
        return Err(Error::invalid("learning rate must be positive and finite"));
    }
    if !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::invalid("momentum must be in [0, 1)"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let inputs = &data.train.features;
    if inputs.ncols() != net.input_dim() {
        return Err(Error::shape(format!(
            "data has {} features, net expects {}",
            inputs.ncols(),
            net.input_dim()
        )));
    }
    let (targets, loss) = match kind {
        DbnKind::Classifier => {
            let labels = data
                .train
                .labels
                .as_ref()
                .ok_or_else(|| Error::invalid("classifier fine-tuning needs labeled data"))?;
            (one_hot(labels, net.output_dim())?, LossKind::CrossEntropy)
        }
        DbnKind::AutoEncoder => {
            if net.output_dim() != inputs.ncols() {
                return Err(Error::shape(format!(
                    "autoencoder net reconstructs {} features from {}-feature data",
                    net.output_dim(),
                    inputs.ncols()
                )));
            }
            (inputs.clone(), LossKind::MeanSquared)
        }
    };

    let mut shuffle_rng = RngStream::derive(config.seed, 0);
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = net
        .layers
        .iter()
        .map(|l| {
            (
                Array2::zeros(l.weights.raw_dim()),
                Array1::zeros(l.biases.len()),
            )
        })
        .collect();
    let mut logs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..inputs.nrows()).collect();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut rows_seen = 0usize;
        for batch_ids in order.chunks(config.batch_size) {
            let batch = inputs.select(Axis(0), batch_ids);
            let batch_targets = targets.select(Axis(0), batch_ids);
            let (batch_loss, grads) = net.batch_gradients(&batch, &batch_targets, loss)?;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite fine-tuning loss at epoch {epoch}"
                )));
            }
            loss_sum += batch_loss * batch_ids.len() as f64;
            rows_seen += batch_ids.len();
            for (t, (gw, gb)) in grads.into_iter().enumerate() {
                let (vw, vb) = &mut velocity[t];
                *vw = config.momentum * &*vw - config.epsilon * &gw;
                *vb = config.momentum * &*vb - config.epsilon * &gb;
                net.layers[t].weights += &*vw;
                net.layers[t].biases += &*vb;
            }
        }
        logs.push(BackpropEpochLog {
            epoch,
            loss: loss_sum / rows_seen as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(logs)
}

/// Output of [`get_output`], depending on the DBN kind.
#[derive(Debug, Clone, PartialEq)]
pub enum DbnOutput {
    Labels(Vec<usize>),
    Features(Array2<f64>),
}

/// The DBN's end product for a batch: labels for a Classifier, features
/// for an AutoEncoder. Uses the fine-tuned network when present (argmax of
/// its softmax / its encoder half), otherwise free-energy classification /
/// the mean-field features.
pub fn get_output(dbn: &Dbn, input: &Array2<f64>) -> Result<DbnOutput> {
    dbn.require_nonempty()?;
    match (&dbn.fine_tuned, dbn.kind) {
        (Some(net), DbnKind::Classifier) => {
            let out = net.forward(input)?;
            Ok(DbnOutput::Labels(
                out.rows()
                    .into_iter()
                    .map(|row| {
                        let mut arg = 0;
                        let mut best = f64::NEG_INFINITY;
                        for (y, &p) in row.iter().enumerate() {
                            if p > best {
                                best = p;
                                arg = y;
                            }
                        }
                        arg
                    })
                    .collect(),
            ))
        }
        (Some(net), DbnKind::AutoEncoder) => Ok(DbnOutput::Features(
            net.forward_through(input, dbn.layers.len())?,
        )),
        (None, DbnKind::Classifier) => Ok(DbnOutput::Labels(predict_class(
            dbn,
            input,
            PredictMode::ByFreeEnergy,
        )?)),
        (None, DbnKind::AutoEncoder) => Ok(DbnOutput::Features(get_feature(dbn, input)?)),
    }
}

/// Basis images of one layer, as rows ready for an image grid.
///
/// Layer 0 bases are the weight columns; deeper layers compose linearly
/// through the weight matrices below. Each basis is min-max normalized to
/// [0, 1] on its own, with constant bases mapping to all zeros.
pub fn plot_bases(
    dbn: &Dbn,
    layer: usize,
    image_width: usize,
    image_height: usize,
) -> Result<Array2<f64>> {
    dbn.require_nonempty()?;
    if layer >= dbn.layers.len() {
        return Err(Error::invalid(format!(
            "layer {layer} out of range for {} layers",
            dbn.layers.len()
        )));
    }
    let num_pixels = dbn.layers[0].num_visible();
    if image_width * image_height != num_pixels {
        return Err(Error::shape(format!(
            "{image_width}x{image_height} image does not cover {num_pixels} visible units"
        )));
    }
    let mut composed = dbn.layers[0].weights.clone();
    for rbm in &dbn.layers[1..=layer] {
        composed = composed.dot(&rbm.weights);
    }
    let mut bases = composed.t().to_owned();
    for mut basis in bases.rows_mut() {
        let min = basis.fold(f64::INFINITY, |a, &b| a.min(b));
        let max = basis.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let range = max - min;
        if range > 0.0 {
            basis.mapv_inplace(|x| (x - min) / range);
        } else {
            basis.fill(0.0);
        }
    }
    Ok(bases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DataSplit, DataStore};
    use crate::oracle::{
        exact_label_posterior, exact_log_likelihood, exact_model_stats, OracleLimits,
    };
    use crate::rbm::LabelBlock;
    use crate::sampling::SamplerKind;
    use crate::synth;
    use crate::training::{train_rbm, TrainConfig};
    use ndarray::array;

    fn rbm(
        num_visible: usize,
        num_hidden: usize,
        classes: Option<usize>,
        seed: u64,
    ) -> RbmParameters {
        let mut rng = RngStream::derive(seed, 0);
        RbmParameters::init(
            num_visible,
            num_hidden,
            UnitType::Binary,
            UnitType::Binary,
            classes,
            None,
            &mut rng,
        )
        .unwrap()
    }

    fn zero_rbm(num_visible: usize, num_hidden: usize) -> RbmParameters {
        RbmParameters {
            weights: Array2::zeros((num_visible, num_hidden)),
            visible_bias: Array1::zeros(num_visible),
            hidden_bias: Array1::zeros(num_hidden),
            visible_type: UnitType::Binary,
            hidden_type: UnitType::Binary,
            label_block: None,
        }
    }

    fn train_config(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epsilon: 0.2,
            momentum: 0.5,
            weight_decay: 0.0,
            epochs,
            batch_size: 20,
            sampler: SamplerKind::Cd { k: 1 },
            sparsity: None,
            master_seed: seed,
            track_exact_loglik: false,
        }
    }

    #[test]
    fn add_rbm_builds_and_checks_the_chain() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(rbm(8, 5, None, 1)).unwrap();
        assert_eq!(dbn.num_layers(), 1);
        dbn.add_rbm(rbm(5, 2, None, 2)).unwrap();
        assert_eq!(dbn.num_layers(), 2);
        assert!(dbn.add_rbm(rbm(4, 2, None, 3)).is_err());
    }

    #[test]
    fn discriminative_layers_only_end_a_classifier() {
        let mut dbn = Dbn::new(DbnKind::Classifier);
        dbn.add_rbm(rbm(6, 4, None, 1)).unwrap();
        dbn.add_rbm(rbm(4, 3, Some(3), 2)).unwrap();
        assert!(dbn.add_rbm(rbm(3, 2, None, 3)).is_err());

        let mut auto = Dbn::new(DbnKind::AutoEncoder);
        assert!(auto.add_rbm(rbm(6, 4, Some(3), 4)).is_err());
    }

    #[test]
    fn single_layer_layerwise_equals_train_rbm() {
        let data =
            DataStore::from_train(DataSplit::unlabeled(synth::two_mode_binary(60, 6, 0.1, 5)));
        let config = train_config(9, 4);
        let mut direct = rbm(6, 4, None, 7);
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(direct.clone()).unwrap();
        train_rbm(&mut direct, &data, &config).unwrap();
        train_layerwise(&mut dbn, &data, &[config]).unwrap();
        assert_eq!(dbn.layers()[0], direct);
    }

    #[test]
    fn zero_epoch_layerwise_changes_nothing() {
        let data =
            DataStore::from_train(DataSplit::unlabeled(synth::two_mode_binary(30, 4, 0.1, 6)));
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(rbm(4, 3, None, 1)).unwrap();
        dbn.add_rbm(rbm(3, 2, None, 2)).unwrap();
        let before = dbn.clone();
        let configs = vec![train_config(1, 0), train_config(2, 0)];
        train_layerwise(&mut dbn, &data, &configs).unwrap();
        assert_eq!(dbn.layers(), before.layers());
    }

    #[test]
    fn layerwise_improves_second_layer_input_likelihood() {
        // The second layer trains on binarizable hidden probabilities of the
        // first; its exact log-likelihood on (binarized) layer-2 inputs must
        // beat its initialization.
        let raw = synth::two_mode_binary(400, 6, 0.05, 8);
        let data = DataStore::from_train(DataSplit::unlabeled(raw.clone()));
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(rbm(6, 5, None, 11)).unwrap();
        dbn.add_rbm(rbm(5, 4, None, 12)).unwrap();
        let init_layer2 = dbn.layers()[1].clone();
        let configs = vec![train_config(21, 40), train_config(22, 40)];
        train_layerwise(&mut dbn, &data, &configs).unwrap();

        let layer2_input = hidden_probs(&dbn.layers()[0], &raw, None)
            .unwrap()
            .mapv(|p| f64::from(p >= 0.5));
        let limits = OracleLimits::default();
        let before = exact_log_likelihood(&init_layer2, &layer2_input, limits).unwrap();
        let after = exact_log_likelihood(&dbn.layers()[1], &layer2_input, limits).unwrap();
        assert!(after > before, "layer-2 LL {before} -> {after}");
    }

    #[test]
    fn get_feature_zero_params_gives_half_everywhere() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(zero_rbm(8, 6)).unwrap();
        dbn.add_rbm(zero_rbm(6, 3)).unwrap();
        let input = Array2::zeros((4, 8));
        let f = get_feature(&dbn, &input).unwrap();
        assert_eq!(f.dim(), (4, 3));
        assert!(f.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn get_feature_handles_empty_batch_and_degenerate_stack() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        let layer = rbm(5, 3, None, 4);
        dbn.add_rbm(layer.clone()).unwrap();
        let empty = Array2::zeros((0, 5));
        assert_eq!(get_feature(&dbn, &empty).unwrap().dim(), (0, 3));
        let input = synth::two_mode_binary(7, 5, 0.2, 1);
        assert_eq!(
            get_feature(&dbn, &input).unwrap(),
            hidden_probs(&layer, &input, None).unwrap()
        );
    }

    #[test]
    fn generate_data_zero_params_is_half_for_any_k() {
        let layer = zero_rbm(4, 3);
        let hidden = array![[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
        for k in [1, 2, 7] {
            let out = generate_data(&layer, &hidden, k, 3).unwrap();
            assert_eq!(out.dim(), (2, 4));
            assert!(out.iter().all(|&x| x == 0.5), "k={k}");
        }
    }

    #[test]
    fn generate_data_with_one_step_is_visible_probs() {
        let layer = rbm(5, 3, None, 9);
        let hidden = array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let out = generate_data(&layer, &hidden, 1, 0).unwrap();
        assert_eq!(out, visible_probs(&layer, &hidden).unwrap().0);
    }

    #[test]
    fn generate_data_long_chain_matches_oracle_marginal() {
        let mut layer = zero_rbm(1, 1);
        layer.weights = array![[1.2]];
        layer.visible_bias = array![-0.4];
        layer.hidden_bias = array![0.3];
        let oracle_mean = exact_model_stats(&layer, OracleLimits::default())
            .unwrap()
            .visible[0];
        let chains = 20_000;
        let hidden = Array2::ones((chains, 1));
        let out = generate_data(&layer, &hidden, 500, 99).unwrap();
        let mean = out.mean().unwrap();
        let std =
            (out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (chains - 1) as f64).sqrt();
        let se = std / (chains as f64).sqrt();
        assert!(
            (mean - oracle_mean).abs() <= 3.0 * se,
            "mean {mean} vs oracle {oracle_mean}, se {se}"
        );
    }

    #[test]
    fn reconstruct_zero_params_is_half_and_shape_preserving() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(zero_rbm(6, 4)).unwrap();
        dbn.add_rbm(zero_rbm(4, 2)).unwrap();
        let input = Array2::zeros((3, 6));
        let out = reconstruct_data(&dbn, &input).unwrap();
        assert_eq!(out.dim(), (3, 6));
        assert!(out.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn trained_rbm_reconstructs_modes_better_than_noise_sits_near_them() {
        let raw = synth::two_mode_binary(500, 4, 0.05, 40);
        let data = DataStore::from_train(DataSplit::unlabeled(raw.clone()));
        let mut layer = RbmParameters::init(
            4,
            4,
            UnitType::Binary,
            UnitType::Binary,
            None,
            Some(&raw),
            &mut RngStream::derive(41, 0),
        )
        .unwrap();
        let mut config = train_config(42, 100);
        config.epsilon = 0.2;
        train_rbm(&mut layer, &data, &config).unwrap();
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(layer).unwrap();

        let modes = array![[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]];
        let recon = reconstruct_data(&dbn, &modes).unwrap();
        let clean_mse = (&modes - &recon).mapv(|d| d * d).mean().unwrap();

        let mut rng = RngStream::derive(43, 0);
        let mut noise = Array2::zeros((40, 4));
        noise.mapv_inplace(|_: f64| f64::from(rng.next_f64() < 0.5));
        let noise_recon = reconstruct_data(&dbn, &noise).unwrap();
        let mut noise_mse = 0.0;
        for (input_row, recon_row) in noise.rows().into_iter().zip(noise_recon.rows()) {
            let nearest = if (&modes.row(0) - &recon_row).mapv(|d| d * d).sum()
                <= (&modes.row(1) - &recon_row).mapv(|d| d * d).sum()
            {
                modes.row(0)
            } else {
                modes.row(1)
            };
            noise_mse += (&input_row - &nearest).mapv(|d| d * d).mean().unwrap();
        }
        noise_mse /= noise.nrows() as f64;
        assert!(
            clean_mse < noise_mse,
            "clean {clean_mse} vs noise-to-mode {noise_mse}"
        );
    }

    fn labeled_three_class_data(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        // Three 6-bit classes: ones in positions 0-1, 2-3, or 4-5, with flips.
        let mut rng = RngStream::derive(seed, 0);
        let mut features = Array2::zeros((n, 6));
        let mut labels = Vec::with_capacity(n);
        for mut row in features.rows_mut() {
            let class = rng.next_below(3);
            for (i, x) in row.iter_mut().enumerate() {
                let base = i / 2 == class;
                let flip = rng.next_f64() < 0.05;
                *x = f64::from(base != flip);
            }
            labels.push(class);
        }
        (features, labels)
    }

    fn trained_classifier(seed: u64) -> Dbn {
        let (features, labels) = labeled_three_class_data(400, seed);
        let data = DataStore::from_train(DataSplit::new(features, Some(labels)).unwrap());
        let mut dbn = Dbn::new(DbnKind::Classifier);
        dbn.add_rbm(rbm(6, 4, Some(3), seed + 1)).unwrap();
        let configs = vec![train_config(seed + 2, 60)];
        train_layerwise(&mut dbn, &data, &configs).unwrap();
        dbn
    }

    #[test]
    fn generate_class_validates_inputs() {
        let dbn = trained_classifier(50);
        assert!(generate_class(&dbn, 5, 10, 0).is_err());
        let mut auto = Dbn::new(DbnKind::AutoEncoder);
        auto.add_rbm(rbm(4, 2, None, 3)).unwrap();
        assert!(generate_class(&auto, 0, 10, 0).is_err());
    }

    #[test]
    fn generate_class_output_shape_and_range() {
        let dbn = trained_classifier(60);
        let out = generate_class(&dbn, 1, 20, 7).unwrap();
        assert_eq!(out.dim(), (1, 6));
        assert!(out.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn generated_samples_carry_their_clamped_class() {
        let dbn = trained_classifier(70);
        let top = &dbn.layers()[0];
        let limits = OracleLimits::default();
        let per_class = 1667usize;
        let mut hits = 0usize;
        let mut total = 0usize;
        for class in 0..3 {
            for i in 0..per_class {
                let sample =
                    generate_class(&dbn, class, 200, 1000 + (class * per_class + i) as u64)
                        .unwrap();
                let posterior =
                    exact_label_posterior(top, &sample.row(0).to_owned(), limits).unwrap();
                let mut arg = 0;
                for y in 1..3 {
                    if posterior[y] > posterior[arg] {
                        arg = y;
                    }
                }
                hits += usize::from(arg == class);
                total += 1;
            }
        }
        let rate = hits as f64 / total as f64;
        assert!(rate >= 0.60, "clamped-class consistency {rate:.3}");
    }

    #[test]
    fn predict_by_free_energy_reads_class_bias() {
        let mut top = zero_rbm(4, 3);
        top.label_block = Some(LabelBlock {
            weights: Array2::zeros((3, 3)),
            biases: array![0.1, 0.9, 0.3],
        });
        let mut dbn = Dbn::new(DbnKind::Classifier);
        dbn.add_rbm(top).unwrap();
        let input = synth::two_mode_binary(10, 4, 0.3, 3);
        let labels = predict_class(&dbn, &input, PredictMode::ByFreeEnergy).unwrap();
        assert!(labels.iter().all(|&y| y == 1));
    }

    #[test]
    fn prediction_ties_break_to_label_zero() {
        let mut top = zero_rbm(4, 3);
        top.label_block = Some(LabelBlock {
            weights: Array2::zeros((3, 3)),
            biases: Array1::zeros(3),
        });
        let mut dbn = Dbn::new(DbnKind::Classifier);
        dbn.add_rbm(top).unwrap();
        let input = array![[1.0, 0.0, 1.0, 0.0]];
        for mode in [PredictMode::ByFreeEnergy, PredictMode::BySampling] {
            assert_eq!(predict_class(&dbn, &input, mode).unwrap(), vec![0]);
        }
    }

    #[test]
    fn free_energy_prediction_matches_oracle_posterior_exhaustively() {
        let mut dbn = Dbn::new(DbnKind::Classifier);
        dbn.add_rbm(rbm(6, 3, Some(3), 80)).unwrap();
        let top = &dbn.layers()[0];
        let limits = OracleLimits::default();
        let states = crate::oracle::all_binary_rows(6);
        let predicted = predict_class(&dbn, &states, PredictMode::ByFreeEnergy).unwrap();
        for (r, v) in states.rows().into_iter().enumerate() {
            let posterior = exact_label_posterior(top, &v.to_owned(), limits).unwrap();
            let mut arg = 0;
            for y in 1..3 {
                if posterior[y] > posterior[arg] {
                    arg = y;
                }
            }
            assert_eq!(predicted[r], arg, "input row {r}");
        }
    }

    #[test]
    fn classifier_conversion_appends_softmax_head() {
        let dbn = {
            let mut d = Dbn::new(DbnKind::Classifier);
            d.add_rbm(rbm(6, 4, None, 1)).unwrap();
            d.add_rbm(rbm(4, 3, Some(3), 2)).unwrap();
            d
        };
        let net = to_feed_forward(&dbn).unwrap();
        assert_eq!(net.layers.len(), 3);
        assert_eq!(net.layers[2].activation, Activation::Softmax);
        assert_eq!(net.layers[0].activation, Activation::Logistic);
        assert_eq!(net.output_dim(), 3);
    }

    #[test]
    fn autoencoder_conversion_unrolls_with_transposed_weights() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(rbm(6, 4, None, 1)).unwrap();
        dbn.add_rbm(rbm(4, 2, None, 2)).unwrap();
        let net = to_feed_forward(&dbn).unwrap();
        assert_eq!(net.layers.len(), 4);
        assert_eq!(
            net.layers[2].weights,
            dbn.layers()[1].weights.t().to_owned()
        );
        assert_eq!(
            net.layers[3].weights,
            dbn.layers()[0].weights.t().to_owned()
        );
        assert_eq!(net.layers[3].biases, dbn.layers()[0].visible_bias);
        assert!(net
            .layers
            .iter()
            .all(|l| l.activation == Activation::Logistic));
    }

    #[test]
    fn gaussian_autoencoder_reconstructs_linearly() {
        let mut rng = RngStream::derive(5, 0);
        let layer = RbmParameters::init(
            4,
            3,
            UnitType::Gaussian,
            UnitType::Binary,
            None,
            None,
            &mut rng,
        )
        .unwrap();
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(layer).unwrap();
        let net = to_feed_forward(&dbn).unwrap();
        assert_eq!(net.layers[1].activation, Activation::Linear);
    }

    #[test]
    fn unrolled_net_forward_equals_reconstruct_data() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(rbm(7, 5, None, 31)).unwrap();
        dbn.add_rbm(rbm(5, 3, None, 32)).unwrap();
        let net = to_feed_forward(&dbn).unwrap();
        let input = synth::two_mode_binary(9, 7, 0.2, 33);
        let via_net = net.forward(&input).unwrap();
        let via_dbn = reconstruct_data(&dbn, &input).unwrap();
        for (a, b) in via_net.iter().zip(via_dbn.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn conversion_of_empty_dbn_fails() {
        assert!(to_feed_forward(&Dbn::new(DbnKind::AutoEncoder)).is_err());
    }

    #[test]
    fn zero_epoch_fine_tuning_changes_nothing() {
        let mut net = FeedForwardNet::random(
            &[4, 3, 2],
            &[Activation::Logistic, Activation::Softmax],
            0.3,
            &mut RngStream::derive(1, 0),
        )
        .unwrap();
        let before = net.clone();
        let (features, labels) = labeled_three_class_data(20, 2);
        let data = DataStore::from_train(
            DataSplit::new(
                features.slice(ndarray::s![.., ..4]).to_owned(),
                Some(labels.iter().map(|&l| l.min(1)).collect()),
            )
            .unwrap(),
        );
        let config = BackpropConfig {
            epochs: 0,
            ..BackpropConfig::default()
        };
        backprop_fine_tune(&mut net, &data, DbnKind::Classifier, &config).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = RngStream::derive(90, 0);
        let input = {
            let mut m = Array2::zeros((10, 4));
            m.mapv_inplace(|_: f64| rng.next_f64());
            m
        };
        let cases: Vec<(Vec<Activation>, LossKind, Array2<f64>)> = vec![
            (
                vec![Activation::Logistic, Activation::Softmax],
                LossKind::CrossEntropy,
                one_hot(&[0, 1, 0, 1, 1, 0, 1, 0, 1, 0], 2).unwrap(),
            ),
            (
                vec![Activation::Logistic, Activation::Logistic],
                LossKind::MeanSquared,
                {
                    let mut t = Array2::zeros((10, 2));
                    t.mapv_inplace(|_: f64| rng.next_f64());
                    t
                },
            ),
            (
                vec![Activation::Logistic, Activation::Linear],
                LossKind::MeanSquared,
                {
                    let mut t = Array2::zeros((10, 2));
                    t.mapv_inplace(|_: f64| rng.next_gaussian());
                    t
                },
            ),
        ];
        for (activations, loss, targets) in cases {
            let net = FeedForwardNet::random(&[4, 3, 2], &activations, 0.7, &mut rng).unwrap();
            let (_, grads) = net.batch_gradients(&input, &targets, loss).unwrap();
            let step = 1e-5;
            let mut max_rel = 0.0f64;
            for t in 0..net.layers.len() {
                for idx in 0..net.layers[t].weights.len() {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    plus.layers[t].weights.as_slice_mut().unwrap()[idx] += step;
                    minus.layers[t].weights.as_slice_mut().unwrap()[idx] -= step;
                    let fd = (plus.batch_loss(&input, &targets, loss).unwrap()
                        - minus.batch_loss(&input, &targets, loss).unwrap())
                        / (2.0 * step);
                    let g = grads[t].0.as_slice().unwrap()[idx];
                    let rel = (fd - g).abs() / g.abs().max(fd.abs()).max(1e-8);
                    max_rel = max_rel.max(rel);
                }
                for idx in 0..net.layers[t].biases.len() {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    plus.layers[t].biases[idx] += step;
                    minus.layers[t].biases[idx] -= step;
                    let fd = (plus.batch_loss(&input, &targets, loss).unwrap()
                        - minus.batch_loss(&input, &targets, loss).unwrap())
                        / (2.0 * step);
                    let g = grads[t].1[idx];
                    let rel = (fd - g).abs() / g.abs().max(fd.abs()).max(1e-8);
                    max_rel = max_rel.max(rel);
                }
            }
            assert!(
                max_rel <= 1e-4,
                "{activations:?}: max relative error {max_rel}"
            );
        }
    }

    #[test]
    fn xor_trains_to_perfect_accuracy_for_most_seeds() {
        let inputs = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let labels = vec![0usize, 1, 1, 0];
        let mut solved = 0;
        for seed in 0..5u64 {
            let mut net = FeedForwardNet::random(
                &[2, 4, 2],
                &[Activation::Logistic, Activation::Softmax],
                0.8,
                &mut RngStream::derive(500 + seed, 0),
            )
            .unwrap();
            let data = DataStore::from_train(
                DataSplit::new(inputs.clone(), Some(labels.clone())).unwrap(),
            );
            let config = BackpropConfig {
                epochs: 2000,
                batch_size: 4,
                epsilon: 0.5,
                momentum: 0.9,
                seed: 600 + seed,
            };
            backprop_fine_tune(&mut net, &data, DbnKind::Classifier, &config).unwrap();
            let out = net.forward(&inputs).unwrap();
            let correct = out
                .rows()
                .into_iter()
                .zip(&labels)
                .filter(|(row, &label)| {
                    let predicted = usize::from(row[1] > row[0]);
                    predicted == label
                })
                .count();
            solved += usize::from(correct == 4);
        }
        assert!(solved >= 4, "XOR solved for {solved} of 5 seeds");
    }

    #[test]
    fn fine_tuning_loss_drops_on_xor_and_autoencoding() {
        let mut classifier_wins = 0;
        let mut autoencoder_wins = 0;
        for seed in 0..5u64 {
            let inputs = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
            let mut net = FeedForwardNet::random(
                &[2, 4, 2],
                &[Activation::Logistic, Activation::Softmax],
                0.8,
                &mut RngStream::derive(700 + seed, 0),
            )
            .unwrap();
            let data =
                DataStore::from_train(DataSplit::new(inputs, Some(vec![0, 1, 1, 0])).unwrap());
            let config = BackpropConfig {
                epochs: 300,
                batch_size: 4,
                epsilon: 0.5,
                momentum: 0.9,
                seed: 800 + seed,
            };
            let logs = backprop_fine_tune(&mut net, &data, DbnKind::Classifier, &config).unwrap();
            classifier_wins += usize::from(logs.last().unwrap().loss < logs[0].loss);

            let raw = synth::two_mode_binary(80, 6, 0.05, 900 + seed);
            let mut dbn = Dbn::new(DbnKind::AutoEncoder);
            dbn.add_rbm(rbm(6, 4, None, 1000 + seed)).unwrap();
            let mut net = to_feed_forward(&dbn).unwrap();
            let data = DataStore::from_train(DataSplit::unlabeled(raw));
            let config = BackpropConfig {
                epochs: 100,
                batch_size: 20,
                epsilon: 0.5,
                momentum: 0.5,
                seed: 1100 + seed,
            };
            let logs = backprop_fine_tune(&mut net, &data, DbnKind::AutoEncoder, &config).unwrap();
            autoencoder_wins += usize::from(logs.last().unwrap().loss < logs[0].loss);
        }
        assert!(
            classifier_wins >= 4,
            "classifier loss fell for {classifier_wins}/5"
        );
        assert!(
            autoencoder_wins >= 4,
            "autoencoder loss fell for {autoencoder_wins}/5"
        );
    }

    #[test]
    fn get_output_dispatches_per_kind_and_net() {
        let input = synth::two_mode_binary(6, 6, 0.2, 7);

        let mut auto = Dbn::new(DbnKind::AutoEncoder);
        auto.add_rbm(rbm(6, 4, None, 1)).unwrap();
        match get_output(&auto, &input).unwrap() {
            DbnOutput::Features(f) => assert_eq!(f, get_feature(&auto, &input).unwrap()),
            DbnOutput::Labels(_) => panic!("autoencoder must yield features"),
        }

        let classifier = trained_classifier(110);
        match get_output(&classifier, &input).unwrap() {
            DbnOutput::Labels(labels) => assert_eq!(
                labels,
                predict_class(&classifier, &input, PredictMode::ByFreeEnergy).unwrap()
            ),
            DbnOutput::Features(_) => panic!("classifier must yield labels"),
        }

        let mut fine_tuned = classifier.clone();
        let net = to_feed_forward(&classifier).unwrap();
        fine_tuned.set_fine_tuned(net.clone()).unwrap();
        match get_output(&fine_tuned, &input).unwrap() {
            DbnOutput::Labels(labels) => {
                let probs = net.forward(&input).unwrap();
                for (r, &label) in labels.iter().enumerate() {
                    let row = probs.row(r);
                    assert!(row.iter().all(|&p| p <= row[label]));
                }
                assert_eq!(labels.len(), input.nrows());
            }
            DbnOutput::Features(_) => panic!(),
        }

        let mut auto_tuned = auto.clone();
        auto_tuned
            .set_fine_tuned(to_feed_forward(&auto).unwrap())
            .unwrap();
        match get_output(&auto_tuned, &input).unwrap() {
            DbnOutput::Features(f) => assert_eq!(f.dim(), (6, 4)),
            DbnOutput::Labels(_) => panic!(),
        }
    }

    #[test]
    fn identity_weights_plot_one_hot_bases() {
        let mut layer = zero_rbm(4, 4);
        for i in 0..4 {
            layer.weights[[i, i]] = 1.0;
        }
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(layer).unwrap();
        let bases = plot_bases(&dbn, 0, 2, 2).unwrap();
        assert_eq!(bases.dim(), (4, 4));
        for j in 0..4 {
            for p in 0..4 {
                assert_eq!(bases[[j, p]], f64::from(p == j));
            }
        }
    }

    #[test]
    fn constant_basis_normalizes_to_zeros() {
        let mut layer = zero_rbm(4, 2);
        layer.weights.column_mut(0).fill(0.7);
        layer.weights[[0, 1]] = 1.0;
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(layer).unwrap();
        let bases = plot_bases(&dbn, 0, 2, 2).unwrap();
        assert!(bases.row(0).iter().all(|&x| x == 0.0));
        assert_eq!(bases.row(1)[0], 1.0);
    }

    #[test]
    fn deep_bases_compose_linearly() {
        let mut first = zero_rbm(4, 3);
        let mut second = zero_rbm(3, 2);
        first.weights = array![
            [1.0, 0.0, 2.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0]
        ];
        second.weights = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let composed = first.weights.dot(&second.weights);
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(first).unwrap();
        dbn.add_rbm(second).unwrap();
        let bases = plot_bases(&dbn, 1, 2, 2).unwrap();
        assert_eq!(bases.nrows(), 2);
        // Row j is the min-max normalized column j of the composition.
        for j in 0..2 {
            let col = composed.column(j);
            let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
            let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            for p in 0..4 {
                assert!((bases[[j, p]] - (col[p] - min) / (max - min)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn plot_bases_rejects_bad_geometry() {
        let mut dbn = Dbn::new(DbnKind::AutoEncoder);
        dbn.add_rbm(zero_rbm(5, 2)).unwrap();
        assert!(plot_bases(&dbn, 0, 2, 2).is_err());
        assert!(plot_bases(&dbn, 1, 5, 1).is_err());
    }
}
