//! Data sources with access counting, and the builtin zero-download toy set.
//!
//! Every read goes through [`CountingSource::get`], so a training run can
//! prove after the fact that a phase never touched the wrong source.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::synthgen::{self, DeadLeavesParams, SaltPepperParams};
use crate::tensor::Tensor;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::cell::Cell;

pub const TOY_NUM_CLASSES: usize = 8;

/// Labeled image store that counts every access.
#[derive(Debug)]
pub struct CountingSource<F: Scalar> {
    items: Vec<(Tensor<F>, u8)>,
    reads: Cell<u64>,
}

impl<F: Scalar> CountingSource<F> {
    pub fn new(items: Vec<(Tensor<F>, u8)>) -> Result<Self> {
        let first_shape = match items.first() {
            None => return Err(Error::RejectedConfig("empty data source".into())),
            Some((img, _)) => img.shape().to_vec(),
        };
        if items.iter().any(|(img, _)| img.shape() != first_shape) {
            return Err(Error::RejectedConfig("data source images must share a shape".into()));
        }
        Ok(Self { items, reads: Cell::new(0) })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_shape(&self) -> &[usize] {
        self.items[0].0.shape()
    }

    /// Fetch one example, counting the access.
    pub fn get(&self, index: usize) -> (&Tensor<F>, u8) {
        self.reads.set(self.reads.get() + 1);
        let (img, label) = &self.items[index];
        (img, *label)
    }

    /// Examples seen so far.
    pub fn reads(&self) -> u64 {
        self.reads.get()
    }

    pub fn reset_reads(&self) {
        self.reads.set(0);
    }

    /// Uncounted view for evaluation-time access (fitting metrics on real
    /// data is outside the training phases the counters guard).
    pub fn items(&self) -> &[(Tensor<F>, u8)] {
        &self.items
    }
}

/// Procedural 16x16 "bars" images, 8 classes from three bar bits:
/// bit 0 = top horizontal bar, bit 1 = bottom horizontal bar,
/// bit 2 = center vertical bar. Position, intensity, and background jitter
/// keep the classes non-trivial.
pub fn toy_bars<F: Scalar>(
    n_per_class: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<(Tensor<F>, u8)>> {
    if size < 8 {
        return Err(Error::RejectedConfig("toy bars need size >= 8".into()));
    }
    if n_per_class == 0 {
        return Err(Error::RejectedConfig("need at least one example per class".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_per_class * TOY_NUM_CLASSES);
    for class in 0..TOY_NUM_CLASSES as u8 {
        for _ in 0..n_per_class {
            let mut pixels = vec![0.0f64; size * size];
            for p in pixels.iter_mut() {
                *p = rng.random::<f64>() * 0.06;
            }
            let intensity = 0.75 + 0.25 * rng.random::<f64>();
            let jitter = |rng: &mut ChaCha12Rng| -> i64 { rng.random_range(-1..=1) };
            let thickness = 2usize;

            if class & 1 != 0 {
                let row = (size as i64 / 4 + jitter(&mut rng)).clamp(0, size as i64 - 2) as usize;
                for r in row..(row + thickness).min(size) {
                    for c in 1..size - 1 {
                        pixels[r * size + c] = intensity;
                    }
                }
            }
            if class & 2 != 0 {
                let row =
                    (3 * size as i64 / 4 + jitter(&mut rng)).clamp(0, size as i64 - 2) as usize;
                for r in row..(row + thickness).min(size) {
                    for c in 1..size - 1 {
                        pixels[r * size + c] = intensity;
                    }
                }
            }
            if class & 4 != 0 {
                let col = (size as i64 / 2 + jitter(&mut rng)).clamp(0, size as i64 - 2) as usize;
                for r in 1..size - 1 {
                    for c in col..(col + thickness).min(size) {
                        pixels[r * size + c] = intensity;
                    }
                }
            }
            let data = pixels.into_iter().map(F::from_f64).collect();
            out.push((Tensor::new(vec![1, size, size], data)?, class));
        }
    }
    Ok(out)
}

/// Dead-leaves images with uniformly random labels.
pub fn dead_leaves_dataset<F: Scalar>(
    params: &DeadLeavesParams,
    n: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<(Tensor<F>, u8)>> {
    let labels = synthgen::random_labels(n, num_classes, seed ^ 0x6c61_6265)?;
    (0..n)
        .map(|i| Ok((synthgen::dead_leaves(params, seed.wrapping_add(i as u64))?, labels[i])))
        .collect()
}

/// Salt-and-pepper images with uniformly random labels.
pub fn salt_pepper_dataset<F: Scalar>(
    params: &SaltPepperParams,
    n: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<(Tensor<F>, u8)>> {
    let labels = synthgen::random_labels(n, num_classes, seed ^ 0x6c61_6265)?;
    (0..n)
        .map(|i| Ok((synthgen::salt_pepper(params, seed.wrapping_add(i as u64))?, labels[i])))
        .collect()
}
