//! Run configuration: a JSON document validated fully before any work
//! starts, with unknown keys rejected. Flat `--set key=value` overrides
//! take precedence over the file, which takes precedence over defaults.
//! The resolved form (all defaults expanded) is what gets snapshotted
//! next to a run's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use deepbelief::data::NormalizeMethod;
use deepbelief::dbn::DbnKind;
use deepbelief::rbm::UnitType;
use deepbelief::sampling::SamplerKind;
use deepbelief::training::{SparsityConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub dbn: DbnSection,
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub finetune: FinetuneSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub images: ImagesSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub gen_class: GenClassSection,
    #[serde(default)]
    pub denoise: DenoiseSection,
    #[serde(default)]
    pub features: FeaturesSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbnSection {
    pub kind: DbnKind,
    /// Unit counts from the input layer up, e.g. `[784, 500, 500, 2000]`.
    pub layer_sizes: Vec<usize>,
    /// Unit type of the first layer's visible units; deeper layers consume
    /// probabilities.
    #[serde(default = "default_visible_type")]
    pub visible_type: UnitType,
    /// Class count for classifiers; inferred from the training labels when
    /// absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

fn default_visible_type() -> UnitType {
    UnitType::Probability
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    MnistIdx,
    Csv,
    SyntheticDigits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub format: DataFormat,
    #[serde(default)]
    pub train_images: Option<PathBuf>,
    #[serde(default)]
    pub train_labels: Option<PathBuf>,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
    #[serde(default)]
    pub train_csv: Option<PathBuf>,
    #[serde(default)]
    pub test_csv: Option<PathBuf>,
    #[serde(default)]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default = "default_synth_train")]
    pub synthetic_train: usize,
    #[serde(default = "default_synth_test")]
    pub synthetic_test: usize,
    #[serde(default)]
    pub synthetic_seed: u64,
    #[serde(default = "default_normalize")]
    pub normalize: NormalizeMethod,
    /// When set, the training rows are shuffled with this seed before any
    /// cut.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    /// Fraction of training rows kept (after the optional shuffle).
    #[serde(default)]
    pub train_fraction: Option<f64>,
}

fn default_synth_train() -> usize {
    10_000
}

fn default_synth_test() -> usize {
    2_000
}

fn default_normalize() -> NormalizeMethod {
    NormalizeMethod::None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerName {
    Gibbs,
    Cd,
    Pcd,
    Fepcd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: SamplerName,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Chain count for gibbs/pcd/fepcd; defaults to the batch size.
    #[serde(default)]
    pub chains: Option<usize>,
    /// FEPCD selection count; defaults to `max(1, chains / 5)`.
    #[serde(default)]
    pub selected: Option<usize>,
}

fn default_k() -> usize {
    1
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            kind: SamplerName::Cd,
            k: 1,
            chains: None,
            selected: None,
        }
    }
}

impl SamplerSection {
    fn resolve(&mut self, batch_size: usize) {
        match self.kind {
            SamplerName::Cd => {
                self.chains = None;
                self.selected = None;
            }
            SamplerName::Gibbs | SamplerName::Pcd => {
                self.chains = Some(self.chains.unwrap_or(batch_size));
                self.selected = None;
            }
            SamplerName::Fepcd => {
                let chains = self.chains.unwrap_or(batch_size);
                self.chains = Some(chains);
                self.selected = Some(self.selected.unwrap_or_else(|| (chains / 5).max(1)));
            }
        }
    }

    pub fn to_kind(&self, batch_size: usize) -> SamplerKind {
        let chains = self.chains.unwrap_or(batch_size);
        match self.kind {
            SamplerName::Gibbs => SamplerKind::Gibbs { k: self.k, chains },
            SamplerName::Cd => SamplerKind::Cd { k: self.k },
            SamplerName::Pcd => SamplerKind::Pcd { k: self.k, chains },
            SamplerName::Fepcd => SamplerKind::Fepcd {
                k: self.k,
                chains,
                selected: self.selected.unwrap_or_else(|| (chains / 5).max(1)),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub sparsity: Option<SparsityConfig>,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_momentum() -> f64 {
    0.5
}

fn default_weight_decay() -> f64 {
    0.0002
}

fn default_epochs() -> usize {
    10
}

fn default_batch_size() -> usize {
    100
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epsilon: default_epsilon(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            sampler: SamplerSection::default(),
            sparsity: None,
        }
    }
}

impl TrainSection {
    /// Training configuration for one layer; the per-layer master seed is
    /// derived by the caller.
    pub fn to_train_config(&self, master_seed: u64) -> TrainConfig {
        TrainConfig {
            epsilon: self.epsilon,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            sampler: self.sampler.to_kind(self.batch_size),
            sparsity: self.sparsity,
            master_seed,
            track_exact_loglik: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    #[serde(default = "default_ft_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_ft_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

fn default_ft_epochs() -> usize {
    30
}

fn default_ft_epsilon() -> f64 {
    0.1
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            epochs: default_ft_epochs(),
            batch_size: default_batch_size(),
            epsilon: default_ft_epsilon(),
            momentum: default_momentum(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_model_name")]
    pub model: String,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_model_name() -> String {
    "model.dbn".to_string()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            model: default_model_name(),
        }
    }
}

/// Tile geometry for PGM outputs; inferred as a square when the first
/// layer's unit count is a perfect square.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagesSection {
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    #[serde(default = "default_generate_count")]
    pub count: usize,
    #[serde(default = "default_generate_k")]
    pub k: usize,
}

fn default_generate_count() -> usize {
    9
}

fn default_generate_k() -> usize {
    100
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            count: default_generate_count(),
            k: default_generate_k(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenClassSection {
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_gen_class_k")]
    pub k: usize,
}

fn default_per_class() -> usize {
    1
}

fn default_gen_class_k() -> usize {
    200
}

impl Default for GenClassSection {
    fn default() -> Self {
        GenClassSection {
            per_class: default_per_class(),
            k: default_gen_class_k(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseSection {
    #[serde(default = "default_denoise_count")]
    pub count: usize,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
}

fn default_denoise_count() -> usize {
    1000
}

fn default_noise_variance() -> f64 {
    0.02
}

impl Default for DenoiseSection {
    fn default() -> Self {
        DenoiseSection {
            count: default_denoise_count(),
            noise_variance: default_noise_variance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    #[serde(default = "default_features_split")]
    pub split: SplitName,
}

fn default_features_split() -> SplitName {
    SplitName::Test
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            split: default_features_split(),
        }
    }
}

impl RunConfig {
    /// Loads, overrides, resolves and validates a configuration. Any
    /// problem here is a usage error (exit 2).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, overrides)
    }

    /// [`RunConfig::load`] on already-read JSON text.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::usage(format!("config is not valid JSON: {e}")))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let mut config: RunConfig = serde_json::from_value(value)
            .map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Fills every computed default so the serialized form reproduces this
    /// run exactly.
    pub fn resolve(&mut self) {
        self.train.sampler.resolve(self.train.batch_size);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.dbn.layer_sizes.len() < 2 {
            return Err(CliError::usage(
                "dbn.layer_sizes needs at least an input and one hidden layer",
            ));
        }
        if self.dbn.layer_sizes.contains(&0) {
            return Err(CliError::usage("dbn.layer_sizes entries must be positive"));
        }
        if let Some(c) = self.dbn.classes {
            if c < 2 {
                return Err(CliError::usage("dbn.classes must be at least 2"));
            }
        }
        self.train
            .to_train_config(0)
            .validate()
            .map_err(|e| CliError::usage(format!("train section: {e}")))?;
        if !(self.finetune.epsilon.is_finite() && self.finetune.epsilon > 0.0) {
            return Err(CliError::usage("finetune.epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.finetune.momentum) {
            return Err(CliError::usage("finetune.momentum must be in [0, 1)"));
        }
        if self.finetune.batch_size == 0 {
            return Err(CliError::usage("finetune.batch_size must be at least 1"));
        }
        if let Some(f) = self.data.train_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(CliError::usage("data.train_fraction must be in (0, 1]"));
            }
        }
        if !(self.denoise.noise_variance.is_finite() && self.denoise.noise_variance >= 0.0) {
            return Err(CliError::usage(
                "denoise.noise_variance must be non-negative",
            ));
        }
        match self.data.format {
            DataFormat::MnistIdx => {
                if self.data.train_images.is_none() || self.data.train_labels.is_none() {
                    return Err(CliError::usage(
                        "mnist-idx data needs data.train_images and data.train_labels",
                    ));
                }
                if self.data.test_images.is_some() != self.data.test_labels.is_some() {
                    return Err(CliError::usage(
                        "data.test_images and data.test_labels come as a pair",
                    ));
                }
            }
            DataFormat::Csv => {
                if self.data.train_csv.is_none() {
                    return Err(CliError::usage("csv data needs data.train_csv"));
                }
            }
            DataFormat::SyntheticDigits => {
                if self.data.synthetic_train == 0 {
                    return Err(CliError::usage("data.synthetic_train must be positive"));
                }
            }
        }
        if let (Some(w), Some(h)) = (self.images.width, self.images.height) {
            if w * h != self.dbn.layer_sizes[0] {
                return Err(CliError::usage(format!(
                    "images.width x images.height = {} does not cover {} input units",
                    w * h,
                    self.dbn.layer_sizes[0]
                )));
            }
        }
        Ok(())
    }

    /// Resolved snapshot JSON (pretty, trailing newline).
    pub fn snapshot(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("resolved config serializes");
        text.push('\n');
        text
    }

    pub fn model_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.model)
    }

    /// Tile geometry for image outputs.
    pub fn image_geometry(&self) -> Result<(usize, usize), CliError> {
        if let (Some(w), Some(h)) = (self.images.width, self.images.height) {
            return Ok((w, h));
        }
        let pixels = self.dbn.layer_sizes[0];
        let side = (pixels as f64).sqrt().round() as usize;
        if side * side == pixels {
            Ok((side, side))
        } else {
            Err(CliError::usage(format!(
                "{pixels} input units are not square; set images.width and images.height"
            )))
        }
    }
}

/// Applies one `key.path=value` override to the JSON document. The value
/// parses as JSON when possible and falls back to a plain string.
fn apply_override(root: &mut serde_json::Value, item: &str) -> Result<(), CliError> {
    let (key, raw_value) = item
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--set needs key=value, got {item:?}")))?;
    let value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::usage(format!(
                "--set key {key:?} has an empty segment"
            )));
        }
        if !cursor.is_object() {
            return Err(CliError::usage(format!(
                "--set key {key:?} descends into a non-object"
            )));
        }
        let map = cursor.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        cursor = map
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
    }
    unreachable!("loop returns on the last segment")
}
