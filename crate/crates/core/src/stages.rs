//! Stage boundaries on the noise-level axis and the per-variant training
//! plan.
//!
//! Thresholds are functions of ᾱ_σ and SNR alone — hyperparameters, never
//! data — so selecting them costs no privacy. Cleaning thresholds come from
//! ᾱ targets through the closed form σ = sqrt(1/ᾱ - 1); coarse thresholds
//! come from the elbow and flattening of the SNR curve, with the published
//! defaults (2, 3) authoritative whenever detection lands far from them.

use crate::diffusion::{alpha_bar_of_sigma, sigma_of_alpha_bar, SigmaDistribution, Truncation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::io::Write;

pub const DEFAULT_COARSE_TAU: (f64, f64) = (2.0, 3.0);
pub const DEFAULT_CLEANING_TAU: (f64, f64) = (-4.0, -3.0);
/// Detection further than this from the defaults is treated as spurious.
pub const CLAMP_DISTANCE: f64 = 1.0;
/// SNR(τ2) must fall below this fraction of SNR(τ1) on the normalized curve.
pub const FLATNESS_FRACTION: f64 = 0.2;

/// Which stage trains on synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Coarse,
    Cleaning,
    FineTune,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Coarse => "coarse",
            Variant::Cleaning => "cleaning",
            Variant::FineTune => "finetune",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coarse" => Ok(Variant::Coarse),
            "cleaning" | "clean" => Ok(Variant::Cleaning),
            "finetune" | "fine-tune" => Ok(Variant::FineTune),
            other => Err(Error::RejectedConfig(format!("unknown variant '{other}'"))),
        }
    }
}

/// Thresholds plus the σ laws each training phase draws from.
#[derive(Debug, Clone)]
pub struct StagePlan<F: Scalar> {
    pub variant: Variant,
    /// Synthetic-phase threshold on ln σ.
    pub tau1: F,
    /// Private-phase threshold on ln σ; +∞ means untruncated private phase.
    pub tau2: F,
    pub synthetic_law: SigmaDistribution<F>,
    pub private_law: SigmaDistribution<F>,
}

/// Assemble the per-variant plan from thresholds and a base σ law.
///
/// Coarse/FineTune: synthetic trains `ln σ > τ1`, private trains
/// `ln σ <= τ2` (untruncated when τ2 = +∞). Cleaning: synthetic trains
/// `ln σ <= τ1`, private trains `ln σ > τ2`. For the published cleaning
/// thresholds τ1 < τ2 the band (τ1, τ2] is trained by neither phase; that
/// gap is reproduced as stated rather than silently widening a law.
pub fn make_stage_plan<F: Scalar>(
    variant: Variant,
    tau1: F,
    tau2: F,
    base: &SigmaDistribution<F>,
) -> Result<StagePlan<F>> {
    if !tau1.is_finite() {
        return Err(Error::RejectedConfig(format!("tau1 must be finite, got {tau1}")));
    }
    match variant {
        Variant::Coarse | Variant::FineTune => {
            if tau2 < tau1 {
                return Err(Error::RejectedConfig(format!(
                    "coarse-style plans need tau2 >= tau1 for the overlap, got ({tau1}, {tau2})"
                )));
            }
            let synthetic_law = base.with_truncation(Truncation::UpperTailKept(tau1))?;
            let private_law = if tau2 == F::infinity() {
                base.with_truncation(Truncation::None)?
            } else {
                base.with_truncation(Truncation::LowerTailKept(tau2))?
            };
            Ok(StagePlan { variant, tau1, tau2, synthetic_law, private_law })
        }
        Variant::Cleaning => {
            if !tau2.is_finite() {
                return Err(Error::RejectedConfig("cleaning needs a finite tau2".into()));
            }
            let synthetic_law = base.with_truncation(Truncation::LowerTailKept(tau1))?;
            let private_law = base.with_truncation(Truncation::UpperTailKept(tau2))?;
            Ok(StagePlan { variant, tau1, tau2, synthetic_law, private_law })
        }
    }
}

/// Solve ᾱ_σ = target for ln σ for a pair of targets; the first target is
/// the larger ᾱ (smaller σ), giving τ1 < τ2.
pub fn cleaning_thresholds<F: Scalar>(alpha_targets: (F, F)) -> Result<(F, F)> {
    let (a1, a2) = alpha_targets;
    for a in [a1, a2] {
        if !(a > F::zero() && a < F::one()) {
            return Err(Error::RejectedInput(format!("alpha target {a} outside (0, 1)")));
        }
    }
    if a1 <= a2 {
        return Err(Error::RejectedInput(
            "first alpha target must exceed the second (tau1 < tau2)".into(),
        ));
    }
    Ok((sigma_of_alpha_bar(a1)?.ln(), sigma_of_alpha_bar(a2)?.ln()))
}

/// Tabulated ᾱ_σ and SNR over a ln σ grid.
#[derive(Debug, Clone)]
pub struct CurveTable<F: Scalar> {
    ln_sigma: Vec<F>,
    alpha_bar: Vec<F>,
    snr: Vec<F>,
}

impl<F: Scalar> CurveTable<F> {
    pub fn new(ln_sigma: Vec<F>, alpha_bar: Vec<F>, snr: Vec<F>) -> Result<Self> {
        if ln_sigma.len() < 3 || alpha_bar.len() != ln_sigma.len() || snr.len() != ln_sigma.len() {
            return Err(Error::RejectedInput("curve columns must align and have >= 3 rows".into()));
        }
        for w in ln_sigma.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::RejectedInput("ln sigma grid must be strictly increasing".into()));
            }
        }
        for (col, name) in [(&alpha_bar, "alpha_bar"), (&snr, "snr")] {
            for w in col.windows(2) {
                if !(w[1] < w[0]) {
                    return Err(Error::RejectedInput(format!(
                        "{name} column must be strictly decreasing"
                    )));
                }
            }
        }
        Ok(Self { ln_sigma, alpha_bar, snr })
    }

    /// Evaluate ᾱ_σ and SNR on a uniform ln σ grid.
    pub fn from_grid(ln_min: F, ln_max: F, step: F) -> Result<Self> {
        if !(step > F::zero()) || !(ln_max > ln_min) {
            return Err(Error::RejectedInput("invalid grid".into()));
        }
        let count = ((ln_max - ln_min) / step).round().as_f64() as usize + 1;
        let mut ln_sigma = Vec::with_capacity(count);
        let mut alpha_bar = Vec::with_capacity(count);
        let mut snr = Vec::with_capacity(count);
        for i in 0..count {
            let s = ln_min + step * F::from_usize(i);
            let sigma = s.exp();
            ln_sigma.push(s);
            alpha_bar.push(alpha_bar_of_sigma(sigma)?);
            snr.push(F::one() / (sigma * sigma));
        }
        Self::new(ln_sigma, alpha_bar, snr)
    }

    /// Default detection grid: ln σ in [-6, 6] at 0.25 spacing, covering the
    /// sampler range with margin on both sides.
    pub fn default_edm() -> Self {
        Self::from_grid(F::from_f64(-6.0), F::from_f64(6.0), F::from_f64(0.25))
            .expect("default grid is valid")
    }

    pub fn len(&self) -> usize {
        self.ln_sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_sigma.is_empty()
    }

    pub fn ln_sigma(&self) -> &[F] {
        &self.ln_sigma
    }

    pub fn alpha_bar(&self) -> &[F] {
        &self.alpha_bar
    }

    pub fn snr(&self) -> &[F] {
        &self.snr
    }

    /// CSV columns: ln_sigma, alpha_bar, snr.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "ln_sigma,alpha_bar,snr")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{}",
                self.ln_sigma[i].as_f64(),
                self.alpha_bar[i].as_f64(),
                self.snr[i].as_f64()
            )?;
        }
        Ok(())
    }
}

/// Elbow of the SNR-vs-ln σ curve: the grid point of maximum perpendicular
/// distance to the chord after min-max normalizing both axes to [0,1].
pub fn detect_elbow<F: Scalar>(curve: &CurveTable<F>) -> (usize, F) {
    let xs = curve.ln_sigma();
    let ys = curve.snr();
    let n = xs.len();
    let (x0, x1) = (xs[0], xs[n - 1]);
    let (ymax, ymin) = (ys[0], ys[n - 1]);
    let nx = |x: F| (x - x0) / (x1 - x0);
    let ny = |y: F| (y - ymin) / (ymax - ymin);
    // Chord from (0, 1) to (1, 0); distance to the line x + y - 1 = 0.
    let mut best = (0usize, F::neg_infinity());
    for i in 0..n {
        let d = (nx(xs[i]) + ny(ys[i]) - F::one()).abs();
        if d > best.1 {
            best = (i, d);
        }
    }
    (best.0, xs[best.0])
}

/// Outcome of coarse-threshold detection; raw detector output is kept for
/// inspection even when the defaults take over.
#[derive(Debug, Clone, Copy)]
pub struct CoarseThresholds<F: Scalar> {
    pub tau1: F,
    pub tau2: F,
    pub elbow_index: usize,
    pub elbow_ln_sigma: F,
    pub tau1_clamped: bool,
    pub tau2_clamped: bool,
}

/// τ1 at the SNR elbow, τ2 where the normalized SNR flattens below
/// [`FLATNESS_FRACTION`] of its τ1 value; both snap to the defaults (2, 3)
/// when detection strays more than [`CLAMP_DISTANCE`] from them.
pub fn coarse_thresholds<F: Scalar>(curve: &CurveTable<F>) -> Result<CoarseThresholds<F>> {
    let xs = curve.ln_sigma();
    let n = xs.len();
    if !(xs[0] <= F::from_f64(-5.0) && xs[n - 1] >= F::from_f64(5.0)) {
        return Err(Error::RejectedInput(
            "curve must cover at least [-5, 5] in ln sigma".into(),
        ));
    }

    let (elbow_index, elbow_ln_sigma) = detect_elbow(curve);
    let default1 = F::from_f64(DEFAULT_COARSE_TAU.0);
    let (tau1, tau1_clamped) =
        if (elbow_ln_sigma - default1).abs() > F::from_f64(CLAMP_DISTANCE) {
            (default1, true)
        } else {
            (elbow_ln_sigma, false)
        };

    // Reference index: first grid point at or above tau1.
    let ref_idx = xs.iter().position(|&x| x >= tau1).unwrap_or(n - 1);
    let ys = curve.snr();
    let (ymax, ymin) = (ys[0], ys[n - 1]);
    let ny = |y: F| (y - ymin) / (ymax - ymin);
    let cutoff = ny(ys[ref_idx]) * F::from_f64(FLATNESS_FRACTION);
    let detected2 = xs
        .iter()
        .zip(ys)
        .skip(ref_idx)
        .find(|(_, &y)| ny(y) <= cutoff)
        .map(|(&x, _)| x);

    let default2 = F::from_f64(DEFAULT_COARSE_TAU.1);
    let (tau2, tau2_clamped) = match detected2 {
        Some(x) if (x - default2).abs() <= F::from_f64(CLAMP_DISTANCE) && x >= tau1 => (x, false),
        _ => (default2, true),
    };

    Ok(CoarseThresholds { tau1, tau2, elbow_index, elbow_ln_sigma, tau1_clamped, tau2_clamped })
}
