//! MNIST IDX format: big-endian magics 2051 (images: count, rows, cols,
//! then unsigned pixel bytes) and 2049 (labels: count, then label bytes).
//! Pixels scale to [0, 1] by division by 255; images flatten row-major.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::DataSplit;

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let end = self.offset + 4;
        if end > self.bytes.len() {
            return Err(Error::format(format!("IDX file truncated reading {what}")));
        }
        let value = u32::from_be_bytes(self.bytes[self.offset..end].try_into().unwrap());
        self.offset = end;
        Ok(value)
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.offset..]
    }
}

/// Parses an IDX image file into an `n x (rows * cols)` matrix in [0, 1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut cursor = Cursor { bytes, offset: 0 };
    let magic = cursor.read_u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!(
            "IDX image magic is {magic}, expected {IMAGES_MAGIC}"
        )));
    }
    let count = cursor.read_u32("image count")? as usize;
    let rows = cursor.read_u32("row count")? as usize;
    let cols = cursor.read_u32("column count")? as usize;
    let pixels_per_image = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format("IDX image dimensions overflow".to_string()))?;
    let expected = count
        .checked_mul(pixels_per_image)
        .ok_or_else(|| Error::format("IDX payload size overflows".to_string()))?;
    let payload = cursor.rest();
    if payload.len() != expected {
        return Err(Error::format(format!(
            "IDX payload has {} bytes, header promises {expected}",
            payload.len()
        )));
    }
    if count > 0 && pixels_per_image == 0 {
        return Err(Error::format("IDX images have zero pixels".to_string()));
    }
    let data: Vec<f64> = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    Array2::from_shape_vec((count, pixels_per_image), data)
        .map_err(|e| Error::format(format!("IDX image reshape failed: {e}")))
}

/// Parses an IDX label file into class indices.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut cursor = Cursor { bytes, offset: 0 };
    let magic = cursor.read_u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!(
            "IDX label magic is {magic}, expected {LABELS_MAGIC}"
        )));
    }
    let count = cursor.read_u32("label count")? as usize;
    let payload = cursor.rest();
    if payload.len() != count {
        return Err(Error::format(format!(
            "IDX payload has {} bytes, header promises {count}",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Loads a matching IDX image/label file pair as one labeled split.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<DataSplit> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    if labels.len() != images.nrows() {
        return Err(Error::format(format!(
            "{} images but {} labels",
            images.nrows(),
            labels.len()
        )));
    }
    DataSplit::new(images, Some(labels))
}

/// Writes pixel bytes (`count * rows * cols` of them, row-major) as an IDX
/// image file.
pub fn write_idx_images(
    path: &Path,
    count: usize,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> Result<()> {
    if pixels.len() != count * rows * cols {
        return Err(Error::invalid(format!(
            "{} pixel bytes for {count}x{rows}x{cols}",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    Ok(std::fs::write(path, out)?)
}

/// Writes class indices (each < 256) as an IDX label file.
pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &label in labels {
        if label > 255 {
            return Err(Error::invalid(format!("label {label} does not fit a byte")));
        }
        out.push(label as u8);
    }
    Ok(std::fs::write(path, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(&rows.to_be_bytes());
        b.extend_from_slice(&cols.to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn image_header_bytes_are_00000803() {
        let bytes = image_bytes(1, 1, 2, &[0, 255]);
        assert_eq!(&bytes[..4], &[0x00, 0x00, 0x08, 0x03]);
        assert!(parse_idx_images(&bytes).is_ok());
    }

    #[test]
    fn pixel_scaling_endpoints() {
        let m = parse_idx_images(&image_bytes(1, 1, 2, &[0, 255])).unwrap();
        assert_eq!(m[[0, 0]], 0.0);
        assert_eq!(m[[0, 1]], 1.0);
    }

    #[test]
    fn label_magic_rejected_as_images() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(3);
        let err = parse_idx_images(&bytes).unwrap_err();
        assert!(err.to_string().contains("2051"), "{err}");
    }

    #[test]
    fn truncated_and_padded_payloads_rejected() {
        let short = image_bytes(2, 2, 2, &[0; 7]);
        assert!(parse_idx_images(&short).is_err());
        let long = image_bytes(2, 2, 2, &[0; 9]);
        assert!(parse_idx_images(&long).is_err());
    }

    #[test]
    fn truncated_header_rejected() {
        assert!(parse_idx_images(&[0, 0, 8]).is_err());
        assert!(parse_idx_images(&IMAGES_MAGIC.to_be_bytes()).is_err());
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        // Header promises u32::MAX^2-ish pixels with an empty payload; the
        // length check must fail before any allocation happens.
        let bytes = image_bytes(u32::MAX, u32::MAX, 2, &[]);
        assert!(parse_idx_images(&bytes).is_err());
    }

    #[test]
    fn labels_roundtrip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lab");
        write_idx_images(&images, 2, 2, 2, &[0, 64, 128, 255, 1, 2, 3, 4]).unwrap();
        write_idx_labels(&labels, &[7, 2]).unwrap();
        let split = load_mnist_idx(&images, &labels).unwrap();
        assert_eq!(split.num_rows(), 2);
        assert_eq!(split.num_features(), 4);
        assert_eq!(split.labels.as_deref(), Some(&[7usize, 2][..]));
        assert_eq!(split.features[[0, 3]], 1.0);
    }

    #[test]
    fn count_mismatch_between_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lab");
        write_idx_images(&images, 2, 1, 1, &[9, 9]).unwrap();
        write_idx_labels(&labels, &[1]).unwrap();
        assert!(load_mnist_idx(&images, &labels).is_err());
    }
}
