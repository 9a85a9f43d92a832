//! Deep belief network toolkit.
//!
//! Restricted Boltzmann machines with binary, probability and Gaussian
//! visible units; negative-phase sampling by Gibbs chains, CD-k, PCD and
//! free-energy-selected PCD; discriminative (softmax-labeled) and sparse
//! variants; greedy layer-wise DBN pretraining; conversion to feed-forward
//! networks with backpropagation fine-tuning; and an exact-enumeration
//! oracle that makes all of it testable at small scale.
//!
//! - [`numerics`] — seeded, platform-stable random streams and activation
//!   primitives
//! - [`rbm`] — parameters, energy, conditionals, free energy
//! - [`sampling`] — chain banks and the four negative-phase estimators
//! - [`training`] — gradient phases, updates, the epoch loop
//! - [`dbn`] — stacks, pretraining, generation, classification,
//!   fine-tuning
//! - [`data`] — datasets, IDX/CSV/PGM/model file formats
//! - [`oracle`] — exact partition function, marginals, expectations,
//!   gradients
//! - [`synth`] — deterministic synthetic datasets

pub mod data;
pub mod dbn;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod rbm;
pub mod sampling;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
