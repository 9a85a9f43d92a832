//! Negative-phase sample generation: Gibbs chains and the CD, PCD and
//! FEPCD estimators built on them.
//!
//! A [`ChainState`] is a bank of parallel Markov chains over one RBM. Each
//! chain owns its own [`RngStream`] (stream id = chain index), so chains
//! can advance in any order or in parallel and still produce identical
//! states. One Gibbs step updates all hidden units from the current
//! visibles, then all visibles (and the label block, for discriminative
//! models) from the new hiddens — hidden first, then visible, exactly once
//! each.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::rbm::{free_energy, hidden_probs, visible_probs, RbmParameters, UnitType};
use crate::training::{moments, GradientStats};

/// Which negative-phase estimator a training run uses.
///
/// `k` is the Gibbs step count per update. `chains` is the number of
/// parallel chains (Gibbs/PCD/FEPCD; CD always uses one chain per batch
/// row). `selected` is how many lowest-free-energy chains FEPCD averages
/// over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerKind {
    Gibbs {
        k: usize,
        chains: usize,
    },
    Cd {
        k: usize,
    },
    Pcd {
        k: usize,
        chains: usize,
    },
    Fepcd {
        k: usize,
        chains: usize,
        selected: usize,
    },
}

impl SamplerKind {
    pub fn k(&self) -> usize {
        match *self {
            SamplerKind::Gibbs { k, .. }
            | SamplerKind::Cd { k }
            | SamplerKind::Pcd { k, .. }
            | SamplerKind::Fepcd { k, .. } => k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::invalid("sampler needs k >= 1 Gibbs steps"));
        }
        match *self {
            SamplerKind::Gibbs { chains, .. } | SamplerKind::Pcd { chains, .. } if chains == 0 => {
                Err(Error::invalid("sampler needs at least 1 chain"))
            }
            SamplerKind::Fepcd {
                chains, selected, ..
            } => {
                if chains == 0 {
                    Err(Error::invalid("sampler needs at least 1 chain"))
                } else if selected == 0 || selected > chains {
                    Err(Error::invalid(format!(
                        "FEPCD selects {selected} of {chains} chains"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// States of a bank of parallel sampling chains over one RBM.
#[derive(Debug, Clone)]
pub struct ChainState {
    visible: Array2<f64>,
    hidden: Array2<f64>,
    labels: Option<Array2<f64>>,
    streams: Vec<RngStream>,
    age: u64,
}

impl ChainState {
    /// Fresh chains with no data: Binary/Probability visibles start at
    /// fair coin flips, Gaussian visibles at `Normal(a, 1)`. Discriminative
    /// chains get a uniformly random one-hot label each.
    pub fn from_model(params: &RbmParameters, num_chains: usize, chain_seed: u64) -> Result<Self> {
        if num_chains == 0 {
            return Err(Error::invalid("need at least 1 chain"));
        }
        let mut streams: Vec<RngStream> = (0..num_chains)
            .map(|c| RngStream::derive(chain_seed, c as u64))
            .collect();
        let num_visible = params.num_visible();
        let mut visible = Array2::zeros((num_chains, num_visible));
        for (c, mut row) in visible.rows_mut().into_iter().enumerate() {
            let rng = &mut streams[c];
            match params.visible_type {
                UnitType::Gaussian => {
                    for (i, x) in row.iter_mut().enumerate() {
                        *x = params.visible_bias[i] + rng.next_gaussian();
                    }
                }
                _ => {
                    for x in row.iter_mut() {
                        *x = f64::from(rng.next_f64() < 0.5);
                    }
                }
            }
        }
        let labels = match params.num_classes() {
            Some(classes) => {
                let mut y = Array2::zeros((num_chains, classes));
                for (c, mut row) in y.rows_mut().into_iter().enumerate() {
                    row[streams[c].next_below(classes)] = 1.0;
                }
                Some(y)
            }
            None => None,
        };
        Ok(ChainState {
            visible,
            hidden: Array2::zeros((num_chains, params.num_hidden())),
            labels,
            streams,
            age: 0,
        })
    }

    /// Chains pinned to a data batch (one chain per row), as CD uses.
    /// Discriminative models require the matching one-hot labels.
    pub fn from_batch(
        params: &RbmParameters,
        batch: &Array2<f64>,
        labels: Option<&Array2<f64>>,
        chain_seed: u64,
    ) -> Result<Self> {
        if batch.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if batch.ncols() != params.num_visible() {
            return Err(Error::shape(format!(
                "batch has {} columns, model has {} visible units",
                batch.ncols(),
                params.num_visible()
            )));
        }
        if params.is_discriminative() && labels.is_none() {
            return Err(Error::invalid(
                "discriminative RBM chains need batch labels",
            ));
        }
        let streams = (0..batch.nrows())
            .map(|c| RngStream::derive(chain_seed, c as u64))
            .collect();
        Ok(ChainState {
            visible: batch.clone(),
            hidden: Array2::zeros((batch.nrows(), params.num_hidden())),
            labels: labels.cloned(),
            streams,
            age: 0,
        })
    }

    pub fn num_chains(&self) -> usize {
        self.visible.nrows()
    }

    pub fn visible(&self) -> &Array2<f64> {
        &self.visible
    }

    pub fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }

    pub fn labels(&self) -> Option<&Array2<f64>> {
        self.labels.as_ref()
    }

    pub fn age(&self) -> u64 {
        self.age
    }

    fn check_model(&self, params: &RbmParameters) -> Result<()> {
        if self.visible.ncols() != params.num_visible()
            || self.hidden.ncols() != params.num_hidden()
            || self.labels.as_ref().map(|y| y.ncols()) != params.num_classes()
        {
            return Err(Error::shape(
                "chain state does not match model dimensions".to_string(),
            ));
        }
        Ok(())
    }
}

/// Updates the hidden states of every chain from its current visibles.
/// With `sample` set, Binary hidden units are sampled; Probability hidden
/// units always keep the activation value.
fn update_hidden(params: &RbmParameters, state: &mut ChainState, sample: bool) -> Result<()> {
    let probs = hidden_probs(params, &state.visible, state.labels.as_ref())?;
    if sample && params.hidden_type == UnitType::Binary {
        for (c, row) in probs.rows().into_iter().enumerate() {
            let rng = &mut state.streams[c];
            for (j, &p) in row.iter().enumerate() {
                state.hidden[[c, j]] = f64::from(rng.next_f64() < p);
            }
        }
    } else {
        state.hidden = probs;
    }
    Ok(())
}

/// Updates the visible states (and unclamped labels) of every chain from
/// its current hiddens. With `sample` unset all unit types store their
/// activation value / conditional mean.
fn update_visible(
    params: &RbmParameters,
    state: &mut ChainState,
    sample: bool,
    clamp_labels: bool,
) -> Result<()> {
    let (probs, label_probs) = visible_probs(params, &state.hidden)?;
    match (sample, params.visible_type) {
        (true, UnitType::Binary) => {
            for (c, row) in probs.rows().into_iter().enumerate() {
                let rng = &mut state.streams[c];
                for (i, &p) in row.iter().enumerate() {
                    state.visible[[c, i]] = f64::from(rng.next_f64() < p);
                }
            }
        }
        (true, UnitType::Gaussian) => {
            for (c, row) in probs.rows().into_iter().enumerate() {
                let rng = &mut state.streams[c];
                for (i, &m) in row.iter().enumerate() {
                    state.visible[[c, i]] = m + rng.next_gaussian();
                }
            }
        }
        _ => state.visible = probs,
    }
    if let (Some(labels), Some(label_probs)) = (state.labels.as_mut(), label_probs) {
        if !clamp_labels {
            if sample {
                for (c, row) in label_probs.rows().into_iter().enumerate() {
                    let rng = &mut state.streams[c];
                    let u = rng.next_f64();
                    let mut cum = 0.0;
                    let mut pick = row.len() - 1;
                    for (y, &p) in row.iter().enumerate() {
                        cum += p;
                        if u < cum {
                            pick = y;
                            break;
                        }
                    }
                    for (y, cell) in labels.row_mut(c).iter_mut().enumerate() {
                        *cell = f64::from(y == pick);
                    }
                }
            } else {
                *labels = label_probs;
            }
        }
    }
    Ok(())
}

/// Chains that start from a given hidden configuration instead of visible
/// data: the first visible update comes straight from `hidden`, then
/// `k - 1` full Gibbs steps run, with the final visible (and label) update
/// kept as activation values. Returns the final visible values.
pub(crate) fn run_from_hidden(
    params: &RbmParameters,
    hidden: &Array2<f64>,
    k: usize,
    chain_seed: u64,
) -> Result<Array2<f64>> {
    if hidden.ncols() != params.num_hidden() {
        return Err(Error::shape(format!(
            "hidden batch has {} columns, model has {} hidden units",
            hidden.ncols(),
            params.num_hidden()
        )));
    }
    let num_chains = hidden.nrows();
    let mut state = ChainState {
        visible: Array2::zeros((num_chains, params.num_visible())),
        hidden: hidden.clone(),
        labels: params
            .num_classes()
            .map(|classes| Array2::zeros((num_chains, classes))),
        streams: (0..num_chains)
            .map(|c| RngStream::derive(chain_seed, c as u64))
            .collect(),
        age: 0,
    };
    update_visible(params, &mut state, k > 1, false)?;
    for step in 2..=k {
        update_hidden(params, &mut state, true)?;
        update_visible(params, &mut state, step < k, false)?;
    }
    Ok(state.visible)
}

/// Single chain with a clamped one-hot label: the visible block starts at
/// fair coin flips (or `Normal(a, 1)` for Gaussian units) and relaxes for
/// `k` Gibbs steps with the label held fixed; the final visible update
/// stays at activation values, which are returned.
pub(crate) fn run_clamped_class(
    params: &RbmParameters,
    label_row: &Array2<f64>,
    k: usize,
    chain_seed: u64,
) -> Result<Array2<f64>> {
    let mut state = ChainState::from_model(params, label_row.nrows(), chain_seed)?;
    state.labels = Some(label_row.clone());
    for step in 1..=k {
        update_hidden(params, &mut state, true)?;
        update_visible(params, &mut state, step < k, true)?;
        state.age += 1;
    }
    Ok(state.visible)
}

/// One full Gibbs step on every chain: hidden update from the current
/// visibles, then visible (and label) update from the new hiddens.
pub fn gibbs_step(params: &RbmParameters, state: &mut ChainState) -> Result<()> {
    state.check_model(params)?;
    update_hidden(params, state, true)?;
    update_visible(params, state, true, false)?;
    state.age += 1;
    Ok(())
}

/// Gibbs step with the label block held fixed (class-conditional
/// generation).
pub fn gibbs_step_clamped_labels(params: &RbmParameters, state: &mut ChainState) -> Result<()> {
    state.check_model(params)?;
    update_hidden(params, state, true)?;
    update_visible(params, state, true, true)?;
    state.age += 1;
    Ok(())
}

/// Output of one negative-phase evaluation.
#[derive(Debug, Clone)]
pub struct NegativePhase {
    /// Model-side sufficient statistics (means over chains, hidden side as
    /// probabilities).
    pub stats: GradientStats,
    /// One row per chain. CD and Gibbs put the k-step reconstruction here:
    /// visible activation values produced by the final sampled hidden
    /// states. PCD exposes the raw chain visible states.
    pub reconstruction: Array2<f64>,
}

/// Free-energy bookkeeping of one FEPCD update.
#[derive(Debug, Clone)]
pub struct FepcdSelection {
    /// Free energy of every chain's visible state, by chain index.
    pub free_energies: Array1<f64>,
    /// Indices of the selected chains, ascending.
    pub selected: Vec<usize>,
}

/// Runs `k` full sampled Gibbs steps, then reads the statistics off the
/// final states (hidden side re-expressed as probabilities). The
/// reconstruction is the mean-field visible read-out of the final hidden
/// samples. Shared core of the CD and Gibbs estimators.
fn run_and_estimate(
    params: &RbmParameters,
    mut state: ChainState,
    k: usize,
) -> Result<NegativePhase> {
    if k == 0 {
        return Err(Error::invalid("need k >= 1 Gibbs steps"));
    }
    for _ in 0..k {
        update_hidden(params, &mut state, true)?;
        update_visible(params, &mut state, true, false)?;
        state.age += 1;
    }
    let stats = moments(params, &state.visible, state.labels.as_ref())?;
    let reconstruction = visible_probs(params, &state.hidden)?.0;
    Ok(NegativePhase {
        stats,
        reconstruction,
    })
}

/// CD-k: chains start at the data batch and run `k` full Gibbs steps. The
/// statistics pair the final visible states with the hidden probabilities
/// they induce; the returned reconstruction holds the visible activation
/// values (probabilities, for Binary units) produced by the final sampled
/// hidden states.
pub fn neg_phase_cd(
    params: &RbmParameters,
    batch: &Array2<f64>,
    batch_labels: Option<&Array2<f64>>,
    k: usize,
    chain_seed: u64,
) -> Result<NegativePhase> {
    let state = ChainState::from_batch(params, batch, batch_labels, chain_seed)?;
    run_and_estimate(params, state, k)
}

/// Gibbs estimator: like CD but the chains start from scratch
/// (model-initialized) on every call instead of at the data.
pub fn neg_phase_gibbs(
    params: &RbmParameters,
    num_chains: usize,
    k: usize,
    chain_seed: u64,
) -> Result<NegativePhase> {
    let state = ChainState::from_model(params, num_chains, chain_seed)?;
    run_and_estimate(params, state, k)
}

/// PCD: advances the persistent chains `k` full sampled Gibbs steps and
/// reads statistics off the resulting chain states (hidden side as
/// probabilities). Chain states persist across calls.
pub fn neg_phase_pcd(
    params: &RbmParameters,
    chains: &mut ChainState,
    k: usize,
) -> Result<NegativePhase> {
    if k == 0 {
        return Err(Error::invalid("need k >= 1 Gibbs steps"));
    }
    chains.check_model(params)?;
    for _ in 0..k {
        gibbs_step(params, chains)?;
    }
    let stats = moments(params, &chains.visible, chains.labels.as_ref())?;
    Ok(NegativePhase {
        stats,
        reconstruction: chains.visible.clone(),
    })
}

/// FEPCD: advances all chains exactly as PCD, then averages the statistics
/// over only the `num_selected` chains whose visible states have the
/// lowest free energy. Ties break toward the lower chain index. Selection
/// affects the statistics only; every chain keeps evolving.
pub fn neg_phase_fepcd(
    params: &RbmParameters,
    chains: &mut ChainState,
    k: usize,
    num_selected: usize,
) -> Result<(NegativePhase, FepcdSelection)> {
    if num_selected == 0 || num_selected > chains.num_chains() {
        return Err(Error::invalid(format!(
            "cannot select {num_selected} of {} chains",
            chains.num_chains()
        )));
    }
    let all = neg_phase_pcd(params, chains, k)?;
    let free_energies = free_energy(params, &chains.visible, None)?;
    if free_energies.iter().any(|f| !f.is_finite()) {
        return Err(Error::Diverged(
            "non-finite chain free energy in FEPCD selection".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..chains.num_chains()).collect();
    order.sort_by(|&a, &b| {
        free_energies[a]
            .partial_cmp(&free_energies[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order[..num_selected].to_vec();
    selected.sort_unstable();

    let sel_visible = chains.visible.select(Axis(0), &selected);
    let sel_labels = chains.labels.as_ref().map(|y| y.select(Axis(0), &selected));
    let stats = moments(params, &sel_visible, sel_labels.as_ref())?;
    Ok((
        NegativePhase {
            stats,
            reconstruction: all.reconstruction,
        },
        FepcdSelection {
            free_energies,
            selected,
        },
    ))
}
