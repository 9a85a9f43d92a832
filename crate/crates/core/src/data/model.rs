//! Model persistence: magic `DBNMODL1`, a little-endian u64 manifest
//! length, a UTF-8 JSON manifest (shapes, unit types, kind, array order),
//! then the raw parameter arrays as little-endian f64, row-major, in
//! manifest order. Round trips are bit-exact.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dbn::{Activation, Dbn, DbnKind, DenseLayer, FeedForwardNet};
use crate::error::{Error, Result};
use crate::rbm::{LabelBlock, RbmParameters, UnitType};

const MAGIC: &[u8; 8] = b"DBNMODL1";
const MAGIC_STEM: &[u8; 7] = b"DBNMODL";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerManifest {
    visible: usize,
    hidden: usize,
    visible_type: UnitType,
    hidden_type: UnitType,
    classes: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetLayerManifest {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    kind: DbnKind,
    layers: Vec<LayerManifest>,
    fine_tuned: Option<Vec<NetLayerManifest>>,
    /// Names of the payload arrays, in payload order.
    arrays: Vec<String>,
}

impl ModelManifest {
    fn describe(dbn: &Dbn) -> Self {
        let layers = dbn
            .layers()
            .iter()
            .map(|rbm| LayerManifest {
                visible: rbm.num_visible(),
                hidden: rbm.num_hidden(),
                visible_type: rbm.visible_type,
                hidden_type: rbm.hidden_type,
                classes: rbm.num_classes(),
            })
            .collect();
        let fine_tuned = dbn.fine_tuned().map(|net| {
            net.layers
                .iter()
                .map(|l| NetLayerManifest {
                    inputs: l.weights.nrows(),
                    outputs: l.weights.ncols(),
                    activation: l.activation,
                })
                .collect()
        });
        let mut manifest = ModelManifest {
            kind: dbn.kind(),
            layers,
            fine_tuned,
            arrays: Vec::new(),
        };
        manifest.arrays = manifest
            .expected_arrays()
            .expect("in-memory model shapes are valid")
            .into_iter()
            .map(|(name, _)| name)
            .collect();
        manifest
    }

    /// Payload array names and element counts, in order. Errors when a
    /// declared shape overflows.
    fn expected_arrays(&self) -> Result<Vec<(String, usize)>> {
        fn area(a: usize, b: usize) -> Result<usize> {
            a.checked_mul(b)
                .ok_or_else(|| Error::format("declared array size overflows".to_string()))
        }
        let mut arrays = Vec::new();
        for (t, l) in self.layers.iter().enumerate() {
            arrays.push((format!("layer{t}.weights"), area(l.visible, l.hidden)?));
            arrays.push((format!("layer{t}.visible_bias"), l.visible));
            arrays.push((format!("layer{t}.hidden_bias"), l.hidden));
            if let Some(classes) = l.classes {
                arrays.push((format!("layer{t}.label_weights"), area(classes, l.hidden)?));
                arrays.push((format!("layer{t}.label_bias"), classes));
            }
        }
        for (t, l) in self.fine_tuned.iter().flatten().enumerate() {
            arrays.push((format!("net{t}.weights"), area(l.inputs, l.outputs)?));
            arrays.push((format!("net{t}.biases"), l.outputs));
        }
        Ok(arrays)
    }
}

fn push_array<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a DBN to the model byte format.
pub fn encode_model(dbn: &Dbn) -> Result<Vec<u8>> {
    let manifest = ModelManifest::describe(dbn);
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::format(format!("manifest serialization failed: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    for rbm in dbn.layers() {
        push_array(&mut out, rbm.weights.iter());
        push_array(&mut out, rbm.visible_bias.iter());
        push_array(&mut out, rbm.hidden_bias.iter());
        if let Some(block) = &rbm.label_block {
            push_array(&mut out, block.weights.iter());
            push_array(&mut out, block.biases.iter());
        }
    }
    if let Some(net) = dbn.fine_tuned() {
        for layer in &net.layers {
            push_array(&mut out, layer.weights.iter());
            push_array(&mut out, layer.biases.iter());
        }
    }
    Ok(out)
}

struct PayloadReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> PayloadReader<'a> {
    fn take(&mut self, count: usize, name: &str) -> Result<Vec<f64>> {
        let byte_len = count
            .checked_mul(8)
            .ok_or_else(|| Error::format("array size overflows".to_string()))?;
        let end = self
            .offset
            .checked_add(byte_len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("payload ends inside array {name}")))?;
        let values: Vec<f64> = self.bytes[self.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::format(format!(
                "non-finite value {bad} in array {name}"
            )));
        }
        self.offset = end;
        Ok(values)
    }
}

/// Deserializes a DBN from model bytes, validating magic, manifest,
/// payload length, shapes and finiteness.
pub fn decode_model(bytes: &[u8]) -> Result<Dbn> {
    if bytes.len() < 16 {
        return Err(Error::format(
            "model file shorter than its header".to_string(),
        ));
    }
    if &bytes[..8] != MAGIC {
        if &bytes[..7] == MAGIC_STEM {
            return Err(Error::format(format!(
                "unsupported model format version {:?}",
                char::from(bytes[7])
            )));
        }
        return Err(Error::format("bad model magic".to_string()));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let manifest_end = 16usize
        .checked_add(
            usize::try_from(manifest_len)
                .map_err(|_| Error::format("manifest length does not fit in memory".to_string()))?,
        )
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format("manifest length exceeds file size".to_string()))?;
    let manifest: ModelManifest = serde_json::from_slice(&bytes[16..manifest_end])
        .map_err(|e| Error::format(format!("manifest parse failed: {e}")))?;

    let expected: Vec<(String, usize)> = manifest.expected_arrays()?;
    let declared: Vec<&String> = manifest.arrays.iter().collect();
    if declared.len() != expected.len()
        || declared
            .iter()
            .zip(expected.iter())
            .any(|(d, (e, _))| d.as_str() != e)
    {
        return Err(Error::format(
            "manifest array list does not match the declared shapes".to_string(),
        ));
    }
    let total_elems: usize = expected.iter().try_fold(0usize, |acc, (_, n)| {
        acc.checked_add(*n)
            .ok_or_else(|| Error::format("payload size overflows".to_string()))
    })?;
    let expected_bytes = total_elems
        .checked_mul(8)
        .ok_or_else(|| Error::format("payload size overflows".to_string()))?;
    if bytes.len() - manifest_end != expected_bytes {
        return Err(Error::format(format!(
            "payload length mismatch: {} bytes, manifest promises {expected_bytes}",
            bytes.len() - manifest_end
        )));
    }

    let mut reader = PayloadReader {
        bytes,
        offset: manifest_end,
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (t, l) in manifest.layers.iter().enumerate() {
        if l.hidden_type == UnitType::Gaussian {
            return Err(Error::format(format!(
                "layer {t} declares Gaussian hidden units; Gaussian is visible-only"
            )));
        }
        let weights = Array2::from_shape_vec(
            (l.visible, l.hidden),
            reader.take(l.visible * l.hidden, &format!("layer{t}.weights"))?,
        )
        .map_err(|e| Error::format(e.to_string()))?;
        let visible_bias =
            Array1::from_vec(reader.take(l.visible, &format!("layer{t}.visible_bias"))?);
        let hidden_bias =
            Array1::from_vec(reader.take(l.hidden, &format!("layer{t}.hidden_bias"))?);
        let label_block = match l.classes {
            Some(classes) => {
                if classes < 2 {
                    return Err(Error::format(format!(
                        "layer {t} declares {classes} classes"
                    )));
                }
                let label_weights = Array2::from_shape_vec(
                    (classes, l.hidden),
                    reader.take(classes * l.hidden, &format!("layer{t}.label_weights"))?,
                )
                .map_err(|e| Error::format(e.to_string()))?;
                let biases =
                    Array1::from_vec(reader.take(classes, &format!("layer{t}.label_bias"))?);
                Some(LabelBlock {
                    weights: label_weights,
                    biases,
                })
            }
            None => None,
        };
        layers.push(RbmParameters {
            weights,
            visible_bias,
            hidden_bias,
            visible_type: l.visible_type,
            hidden_type: l.hidden_type,
            label_block,
        });
    }
    let fine_tuned = match &manifest.fine_tuned {
        Some(net_layers) => {
            let mut dense = Vec::with_capacity(net_layers.len());
            for (t, l) in net_layers.iter().enumerate() {
                let weights = Array2::from_shape_vec(
                    (l.inputs, l.outputs),
                    reader.take(l.inputs * l.outputs, &format!("net{t}.weights"))?,
                )
                .map_err(|e| Error::format(e.to_string()))?;
                let biases = Array1::from_vec(reader.take(l.outputs, &format!("net{t}.biases"))?);
                dense.push(DenseLayer {
                    weights,
                    biases,
                    activation: l.activation,
                });
            }
            Some(FeedForwardNet { layers: dense })
        }
        None => None,
    };
    Dbn::from_parts(manifest.kind, layers, fine_tuned)
        .map_err(|e| Error::format(format!("model violates stacking invariants: {e}")))
}

/// Saves a DBN to a model file.
pub fn save_model(dbn: &Dbn, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, encode_model(dbn)?)?)
}

/// Loads a DBN from a model file.
pub fn load_model(path: &Path) -> Result<Dbn> {
    decode_model(&std::fs::read(path)?)
}

/// The model's manifest as pretty-printed JSON (what `inspect` shows).
pub fn manifest_json(dbn: &Dbn) -> String {
    serde_json::to_string_pretty(&ModelManifest::describe(dbn)).expect("manifest serializes")
}
