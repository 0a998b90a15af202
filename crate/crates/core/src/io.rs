//! File formats: the raw tensor container (lossless f64 round trip) and
//! 8-bit PGM export for quick viewing.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Container layout, all fields little-endian 64-bit: magic, version, rank,
/// dims, then the values as f64.
pub const TENSOR_MAGIC: u64 = u64::from_le_bytes(*b"DPDTNSR\0");
pub const TENSOR_VERSION: u64 = 1;

pub fn write_tensor<F: Scalar, W: Write>(w: &mut W, tensor: &Tensor<F>) -> Result<()> {
    w.write_all(&TENSOR_MAGIC.to_le_bytes())?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    w.write_all(&(tensor.shape().len() as u64).to_le_bytes())?;
    for &d in tensor.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in tensor.data() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Malformed("truncated tensor container".into()))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_tensor<F: Scalar, R: Read>(r: &mut R) -> Result<Tensor<F>> {
    let magic = read_u64(r)?;
    if magic != TENSOR_MAGIC {
        return Err(Error::Malformed(format!(
            "bad tensor magic {magic:#018x}, expected {TENSOR_MAGIC:#018x}"
        )));
    }
    let version = read_u64(r)?;
    if version != TENSOR_VERSION {
        return Err(Error::Malformed(format!("unsupported tensor version {version}")));
    }
    let rank = read_u64(r)? as usize;
    if rank > 8 {
        return Err(Error::Malformed(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Malformed("truncated tensor data".into()))?;
        data.push(F::from_f64(f64::from_le_bytes(buf)));
    }
    Tensor::new(shape, data)
}

pub fn write_tensor_file<F: Scalar>(path: &Path, tensor: &Tensor<F>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, tensor)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor_file<F: Scalar>(path: &Path) -> Result<Tensor<F>> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

/// Stack same-shape images into one `[n, ...]` batch tensor.
pub fn stack_images<F: Scalar>(images: &[Tensor<F>]) -> Result<Tensor<F>> {
    let first = images
        .first()
        .ok_or_else(|| Error::RejectedInput("cannot stack zero images".into()))?;
    let mut shape = vec![images.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(images.len() * first.len());
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::RejectedInput("stacked images must share a shape".into()));
        }
        data.extend_from_slice(img.data());
    }
    Tensor::new(shape, data)
}

/// Split a `[n, ...]` batch tensor back into images.
pub fn unstack_images<F: Scalar>(batch: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
    if batch.shape().len() < 2 {
        return Err(Error::RejectedInput("batch tensor must have rank >= 2".into()));
    }
    let n = batch.shape()[0];
    let inner: Vec<usize> = batch.shape()[1..].to_vec();
    let stride: usize = inner.iter().product();
    (0..n)
        .map(|i| {
            Tensor::new(
                inner.clone(),
                batch.data()[i * stride..(i + 1) * stride].to_vec(),
            )
        })
        .collect()
}

/// 8-bit binary PGM (P5) with values quantized from [0,1].
pub fn write_pgm<F: Scalar, W: Write>(w: &mut W, image: &Tensor<F>) -> Result<()> {
    let shape = image.shape();
    let (h, wid) = match shape {
        [1, h, w] => (*h, *w),
        [h, w] => (*h, *w),
        other => {
            return Err(Error::RejectedInput(format!(
                "PGM export needs a single-channel image, got shape {other:?}"
            )))
        }
    };
    write!(w, "P5\n{wid} {h}\n255\n")?;
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_pgm_file<F: Scalar>(path: &Path, image: &Tensor<F>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, image)?;
    w.flush()?;
    Ok(())
}
