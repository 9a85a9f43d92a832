//! Dataset management and file formats: train/validation/test splits with
//! normalization, MNIST IDX and labeled-CSV loaders, PGM image grids,
//! feature export, and model persistence.
//!
//! All parsers here accept untrusted bytes: they validate magics, lengths
//! and value ranges before allocating or trusting anything, and every
//! failure is a typed error rather than a panic.

mod csv;
mod idx;
mod model;
mod pgm;

pub use csv::{export_features_csv, format_features_csv, load_csv, parse_csv};
pub use idx::{
    load_mnist_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels,
};
pub use model::{decode_model, encode_model, load_model, manifest_json, save_model};
pub use pgm::{render_image_grid, save_image_grid};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// One split: a row-per-sample feature matrix and optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl DataSplit {
    pub fn new(features: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(Error::shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.nrows()
                )));
            }
        }
        Ok(DataSplit { features, labels })
    }

    pub fn unlabeled(features: Array2<f64>) -> Self {
        DataSplit {
            features,
            labels: None,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMethod {
    None,
    MinMax,
    ZScore,
}

/// Normalization state: the method plus the per-feature `(shift, scale)`
/// computed on the training split (`x -> (x - shift) / scale`, with
/// `scale < 1e-12` mapping the feature to 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub method: NormalizeMethod,
    pub per_feature: Vec<(f64, f64)>,
}

impl Normalization {
    pub fn none() -> Self {
        Normalization {
            method: NormalizeMethod::None,
            per_feature: Vec::new(),
        }
    }

    /// Applies the stored statistics to an arbitrary matrix.
    pub fn apply(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if self.method == NormalizeMethod::None {
            return Ok(features.clone());
        }
        if features.ncols() != self.per_feature.len() {
            return Err(Error::shape(format!(
                "{} features, normalization has statistics for {}",
                features.ncols(),
                self.per_feature.len()
            )));
        }
        let mut out = features.clone();
        for (i, &(shift, scale)) in self.per_feature.iter().enumerate() {
            for x in out.column_mut(i).iter_mut() {
                *x = if scale < 1e-12 {
                    0.0
                } else {
                    (*x - shift) / scale
                };
            }
        }
        Ok(out)
    }
}

/// Train/validation/test splits sharing one feature space, plus the
/// normalization fitted on the training split. Immutable: every
/// transformation returns a new store.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStore {
    pub train: DataSplit,
    pub validation: Option<DataSplit>,
    pub test: Option<DataSplit>,
    pub normalization: Normalization,
}

impl DataStore {
    pub fn from_train(train: DataSplit) -> Self {
        DataStore {
            train,
            validation: None,
            test: None,
            normalization: Normalization::none(),
        }
    }

    pub fn with_validation(mut self, split: DataSplit) -> Result<Self> {
        self.check_features(&split)?;
        self.validation = Some(split);
        Ok(self)
    }

    pub fn with_test(mut self, split: DataSplit) -> Result<Self> {
        self.check_features(&split)?;
        self.test = Some(split);
        Ok(self)
    }

    fn check_features(&self, split: &DataSplit) -> Result<()> {
        if split.num_features() != self.train.num_features() {
            return Err(Error::shape(format!(
                "split has {} features, train has {}",
                split.num_features(),
                self.train.num_features()
            )));
        }
        Ok(())
    }

    /// Normalizes all splits with statistics computed on the training
    /// split only.
    ///
    /// MinMax: `(x - min) / (max - min)`, constant features mapping to 0.
    /// ZScore: `(x - mean) / std` with the sample standard deviation
    /// (n - 1 divisor); features with `std < 1e-12` map to 0.
    pub fn normalize(&self, method: NormalizeMethod) -> Result<DataStore> {
        if self.train.num_rows() == 0 {
            return Err(Error::invalid("cannot normalize an empty training split"));
        }
        let train = &self.train.features;
        let per_feature: Vec<(f64, f64)> = match method {
            NormalizeMethod::None => Vec::new(),
            NormalizeMethod::MinMax => train
                .axis_iter(Axis(1))
                .map(|col| {
                    let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
                    let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    (min, max - min)
                })
                .collect(),
            NormalizeMethod::ZScore => train
                .axis_iter(Axis(1))
                .map(|col| {
                    let mean = col.mean().unwrap();
                    let std = if col.len() < 2 {
                        0.0
                    } else {
                        (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                            / (col.len() - 1) as f64)
                            .sqrt()
                    };
                    (mean, std)
                })
                .collect(),
        };
        let normalization = Normalization {
            method,
            per_feature,
        };
        let map_split = |split: &DataSplit| -> Result<DataSplit> {
            Ok(DataSplit {
                features: normalization.apply(&split.features)?,
                labels: split.labels.clone(),
            })
        };
        Ok(DataStore {
            train: map_split(&self.train)?,
            validation: self.validation.as_ref().map(&map_split).transpose()?,
            test: self.test.as_ref().map(&map_split).transpose()?,
            normalization,
        })
    }

    /// Seeded Fisher–Yates permutation of the training rows; labels travel
    /// with their rows. Validation and test splits are untouched. Uses
    /// stream id 0 under the given seed.
    pub fn shuffle(&self, seed: u64) -> DataStore {
        let mut order: Vec<usize> = (0..self.train.num_rows()).collect();
        RngStream::derive(seed, 0).shuffle(&mut order);
        DataStore {
            train: DataSplit {
                features: self.train.features.select(Axis(0), &order),
                labels: self
                    .train
                    .labels
                    .as_ref()
                    .map(|l| order.iter().map(|&i| l[i]).collect()),
            },
            validation: self.validation.clone(),
            test: self.test.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Keeps the first `ceil(fraction * n)` training rows. Call after
    /// [`DataStore::shuffle`] for a random subset.
    pub fn cut(&self, fraction: f64) -> Result<DataStore> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "cut fraction {fraction} outside (0, 1]"
            )));
        }
        let n = self.train.num_rows();
        let keep = ((fraction * n as f64).ceil() as usize).min(n);
        let ids: Vec<usize> = (0..keep).collect();
        Ok(DataStore {
            train: DataSplit {
                features: self.train.features.select(Axis(0), &ids),
                labels: self.train.labels.as_ref().map(|l| l[..keep].to_vec()),
            },
            validation: self.validation.clone(),
            test: self.test.clone(),
            normalization: self.normalization.clone(),
        })
    }
}
