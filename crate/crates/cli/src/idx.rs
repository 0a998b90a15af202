//! IDX container ingestion (the standard MNIST-family file format):
//! big-endian magic and dimensions, unsigned bytes, pixels rescaled to
//! [0, 1].

use dpdiff_core::error::{Error, Result};
use dpdiff_core::tensor::Tensor;
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Debug)]
pub struct IdxDataset {
    pub images: Vec<Tensor<f64>>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Malformed(format!("truncated {what}")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<Tensor<f64>>, usize, usize)> {
    let magic = be_u32(bytes, 0, "image file header")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Malformed(format!(
            "image magic {magic}, expected {IMAGES_MAGIC}"
        )));
    }
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "image rows")? as usize;
    let cols = be_u32(bytes, 12, "image cols")? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Malformed(format!(
            "image file truncated: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let data: Vec<f64> = bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        images.push(Tensor::image(rows, cols, data)?);
    }
    Ok((images, rows, cols))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "label file header")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Malformed(format!(
            "label magic {magic}, expected {LABELS_MAGIC}"
        )));
    }
    let count = be_u32(bytes, 4, "label count")? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Malformed(format!(
            "label file truncated: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Load an image/label pair, enforcing matching counts.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let (images, rows, cols) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if images.len() != labels.len() {
        return Err(Error::Malformed(format!(
            "count mismatch: {} images vs {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(IdxDataset { images, labels, rows, cols })
}
