//! Programmatically generated synthetic data.
//!
//! These generators never see a dataset: everything is a function of their
//! parameters and a seed, so pretraining on their output costs no privacy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Pixel value a dead-leaves image holds before any disk covers it.
pub const BACKGROUND_SENTINEL: f64 = 0.5;

/// How many disks to stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiskBudget {
    /// Stamp until no background pixel remains.
    FullCoverage,
    /// Stamp exactly this many disks.
    Count(usize),
}

#[derive(Debug, Clone)]
pub struct DeadLeavesParams {
    pub height: usize,
    pub width: usize,
    pub budget: DiskBudget,
    /// Radius density exponent: p(r) ∝ r^-exponent on [r_min, r_max].
    pub radius_exponent: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl DeadLeavesParams {
    /// Disks with an r^-3 radius law truncated to [2 px, size/2].
    pub fn new(height: usize, width: usize, budget: DiskBudget) -> Result<Self> {
        let params = Self {
            height,
            width,
            budget,
            radius_exponent: 3.0,
            r_min: 2.0,
            r_max: (height.min(width) as f64 / 2.0).max(2.0),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::RejectedInput("zero-size image".into()));
        }
        if !(self.r_min > 0.0 && self.r_max >= self.r_min) {
            return Err(Error::RejectedInput("invalid radius bounds".into()));
        }
        if self.r_max > (self.height.max(self.width) as f64) {
            return Err(Error::RejectedInput("radius exceeds image scale".into()));
        }
        Ok(())
    }
}

/// One stamped disk, in generation (front-to-back) order.
#[derive(Debug, Clone, Copy)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub color: f64,
}

fn sample_radius(params: &DeadLeavesParams, u: f64) -> f64 {
    // Inverse CDF of p(r) ∝ r^-k on [r_min, r_max]; k = 3 gives
    // F(r) = (r_min^-2 - r^-2) / (r_min^-2 - r_max^-2).
    let k = params.radius_exponent;
    let a = params.r_min;
    let b = params.r_max;
    if (k - 1.0).abs() < 1e-12 {
        return a * (b / a).powf(u);
    }
    let e = 1.0 - k;
    (a.powf(e) + u * (b.powf(e) - a.powf(e))).powf(1.0 / e)
}

/// Disk color: 0 w.p. 1/3, 1 w.p. 1/3, else uniform on [0,1].
fn sample_color(rng: &mut ChaCha12Rng) -> f64 {
    let u: f64 = rng.random();
    if u < 1.0 / 3.0 {
        0.0
    } else if u < 2.0 / 3.0 {
        1.0
    } else {
        rng.random()
    }
}

/// Dead-leaves image: opaque disks drawn front-to-back with a visibility
/// mask, so the first disk claiming a pixel keeps it.
pub fn dead_leaves<F: Scalar>(params: &DeadLeavesParams, seed: u64) -> Result<Tensor<F>> {
    dead_leaves_with_disks(params, seed).map(|(img, _)| img)
}

/// Same as [`dead_leaves`] but also returns the stamped disks for
/// inspection.
pub fn dead_leaves_with_disks<F: Scalar>(
    params: &DeadLeavesParams,
    seed: u64,
) -> Result<(Tensor<F>, Vec<Disk>)> {
    params.validate()?;
    let (h, w) = (params.height, params.width);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pixels = vec![F::from_f64(BACKGROUND_SENTINEL); h * w];
    let mut covered = vec![false; h * w];
    let mut remaining = h * w;
    let mut disks = Vec::new();

    let max_disks = match params.budget {
        DiskBudget::Count(n) => n,
        DiskBudget::FullCoverage => usize::MAX,
    };

    while disks.len() < max_disks {
        if matches!(params.budget, DiskBudget::FullCoverage) && remaining == 0 {
            break;
        }
        // Draw order is fixed: radius, cx, cy, color.
        let r = sample_radius(params, rng.random());
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let color = sample_color(&mut rng);
        disks.push(Disk { cx, cy, r, color });

        let y_lo = ((cy - r).floor().max(0.0)) as usize;
        let y_hi = ((cy + r).ceil() as usize).min(h);
        let x_lo = ((cx - r).floor().max(0.0)) as usize;
        let x_hi = ((cx + r).ceil() as usize).min(w);
        let r2 = r * r;
        for y in y_lo..y_hi {
            let dy = y as f64 + 0.5 - cy;
            for x in x_lo..x_hi {
                let dx = x as f64 + 0.5 - cx;
                let idx = y * w + x;
                if !covered[idx] && dx * dx + dy * dy <= r2 {
                    covered[idx] = true;
                    pixels[idx] = F::from_f64(color);
                    remaining -= 1;
                }
            }
        }
        if disks.len() >= 10_000_000 {
            return Err(Error::Numerical("dead-leaves coverage did not terminate".into()));
        }
    }

    Ok((Tensor::new(vec![1, h, w], pixels)?, disks))
}

#[derive(Debug, Clone, Copy)]
pub struct SaltPepperParams {
    pub height: usize,
    pub width: usize,
    /// White-pixel probability.
    pub p: f64,
}

impl SaltPepperParams {
    pub fn new(height: usize, width: usize, p: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::RejectedInput("zero-size image".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::RejectedInput(format!("p={p} outside [0, 1]")));
        }
        Ok(Self { height, width, p })
    }

    /// The mean-of-MNIST default.
    pub fn mnist_mean(height: usize, width: usize) -> Self {
        Self { height, width, p: 0.13 }
    }
}

/// I.i.d. Bernoulli(p) pixels mapped to {0, 1}.
pub fn salt_pepper<F: Scalar>(params: &SaltPepperParams, seed: u64) -> Result<Tensor<F>> {
    if !(0.0..=1.0).contains(&params.p) {
        return Err(Error::RejectedInput(format!("p={} outside [0, 1]", params.p)));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pixels = (0..params.height * params.width)
        .map(|_| {
            if rng.random::<f64>() < params.p {
                F::one()
            } else {
                F::zero()
            }
        })
        .collect();
    Tensor::new(vec![1, params.height, params.width], pixels)
}

/// I.i.d. uniform labels in [0, num_classes).
pub fn random_labels(n: usize, num_classes: usize, seed: u64) -> Result<Vec<u8>> {
    if num_classes == 0 || num_classes > 256 {
        return Err(Error::RejectedInput(format!(
            "num_classes {num_classes} outside 1..=256"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| rng.random_range(0..num_classes) as u8)
        .collect())
}
