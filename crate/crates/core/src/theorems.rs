//! Monte Carlo verification of the two stage-replacement bounds.
//!
//! The coarse-stage bound says two forward processes meet: past some step N,
//! paired states differ by more than ν with probability at most γ. Under the
//! shared-noise coupling the difference is exactly `sqrt(ᾱ_n)·(X0 - Y0)`, so
//! the verifier measures that contraction; an energy-distance estimate on
//! independently-sampled marginals covers the distributional reading. The
//! cleaning-stage bound controls `X_t - X0 - (Y_t - Y0)` by an explicit
//! two-term γ (a Markov term plus a chi-squared Chernoff term) that the
//! verifier checks empirically on an ᾱ grid.

use crate::diffusion::DdpmSchedule;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use std::io::Write;

/// How paired draws share their forward noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    SharedNoise,
    IndependentNoise,
}

/// A pair of sampleable data distributions plus Monte Carlo settings.
pub struct TheoremTrial<'a, F: Scalar, R: Rng> {
    pub x0: &'a dyn Fn(&mut R) -> Tensor<F>,
    pub y0: &'a dyn Fn(&mut R) -> Tensor<F>,
    pub dim: usize,
    pub samples: usize,
    pub coupling: Coupling,
}

impl<'a, F: Scalar, R: Rng> TheoremTrial<'a, F, R> {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1000 {
            return Err(Error::RejectedConfig("need at least 1000 Monte Carlo samples".into()));
        }
        Ok(())
    }
}

/// Result of the coarse-stage verification.
#[derive(Debug, Clone)]
pub struct CoarseConvergenceReport {
    /// Smallest grid step with exceedance <= γ there and beyond.
    pub n_star: usize,
    /// (step, empirical exceedance) over the sampled step grid.
    pub exceedance: Vec<(usize, f64)>,
    /// Mean paired distance E||X0 - Y0|| of the drawn pairs.
    pub mean_pair_distance: f64,
}

/// Shared-noise verification of the coarse-stage bound: find the smallest N
/// with `P(||X_n - Y_n|| > ν) <= γ` for all sampled n >= N.
///
/// With shared η the difference is `sqrt(ᾱ_n)(X0 - Y0)` exactly, so each
/// pair contributes a deterministic threshold in n and exceedance is
/// nonincreasing.
pub fn verify_coarse_convergence<F: Scalar, R: Rng>(
    trial: &TheoremTrial<'_, F, R>,
    schedule: &DdpmSchedule<F>,
    nu: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<CoarseConvergenceReport> {
    trial.validate()?;
    if trial.coupling != Coupling::SharedNoise {
        return Err(Error::RejectedConfig(
            "coarse-stage verifier uses the shared-noise coupling".into(),
        ));
    }
    if !(nu > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::RejectedInput("need nu > 0 and gamma in (0, 1)".into()));
    }

    let mut pair_distances = Vec::with_capacity(trial.samples);
    for _ in 0..trial.samples {
        let x0 = (trial.x0)(rng);
        let y0 = (trial.y0)(rng);
        if x0.len() != trial.dim || y0.len() != trial.dim {
            return Err(Error::RejectedInput("sampler dimension mismatch".into()));
        }
        pair_distances.push(x0.sub(&y0)?.l2_norm().as_f64());
    }
    let mean_pair_distance =
        pair_distances.iter().sum::<f64>() / pair_distances.len() as f64;

    let t_total = schedule.len();
    let stride = (t_total / 200).max(1);
    let mut exceedance = Vec::new();
    let mut n_star = None;
    for n in (1..=t_total).step_by(stride).chain(std::iter::once(t_total)) {
        let root_ab = schedule.alpha_bar(n)?.as_f64().sqrt();
        let p = pair_distances.iter().filter(|&&d| root_ab * d > nu).count() as f64
            / pair_distances.len() as f64;
        if exceedance.last().map(|&(m, _)| m) != Some(n) {
            exceedance.push((n, p));
        }
        // sqrt(ᾱ_n) decreases in n, so once below γ it stays below.
        if p <= gamma && n_star.is_none() {
            n_star = Some(n);
        }
    }
    match n_star {
        Some(n) => Ok(CoarseConvergenceReport { n_star: n, exceedance, mean_pair_distance }),
        None => Err(Error::ThresholdNotReached {
            terminal: exceedance.last().map(|&(_, p)| p).unwrap_or(1.0),
            target: gamma,
        }),
    }
}

/// Unbiased energy-distance U-statistic between two sample sets.
pub fn energy_distance<F: Scalar>(xs: &[Tensor<F>], ys: &[Tensor<F>]) -> Result<f64> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::RejectedInput("energy distance needs >= 2 samples per side".into()));
    }
    let dist = |a: &Tensor<F>, b: &Tensor<F>| -> Result<f64> { Ok(a.sub(b)?.l2_norm().as_f64()) };
    let mut cross = 0.0;
    for x in xs {
        for y in ys {
            cross += dist(x, y)?;
        }
    }
    cross /= (xs.len() * ys.len()) as f64;
    let within = |set: &[Tensor<F>]| -> Result<f64> {
        let mut s = 0.0;
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                s += dist(&set[i], &set[j])?;
            }
        }
        Ok(2.0 * s / (set.len() * (set.len() - 1)) as f64)
    };
    Ok(2.0 * cross - within(xs)? - within(ys)?)
}

/// Explicit cleaning-stage bound:
/// `γ = (2(1 - sqrt(ᾱ))/ν)·E||X0 - Y0||
///    + exp(-ν²/(16(1-ᾱ)) + d/2 - (d/2)·ln(ν²/(8d(1-ᾱ))))`.
///
/// The Chernoff term needs its argument `ν²/(8d(1-ᾱ))` comfortably above 1;
/// this implementation requires it to be at least e so the log factor is at
/// least 1, and reports out-of-region otherwise.
pub fn cleaning_gamma_bound(alpha_bar: f64, nu: f64, dim: usize, expected_diff: f64) -> Result<f64> {
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::RejectedInput(format!("alpha_bar {alpha_bar} outside (0, 1)")));
    }
    if !(nu > 0.0) || dim == 0 || !(expected_diff >= 0.0) {
        return Err(Error::RejectedInput("invalid bound inputs".into()));
    }
    let one_minus = 1.0 - alpha_bar;
    let d = dim as f64;
    let chernoff_arg = nu * nu / (8.0 * d * one_minus);
    if chernoff_arg < std::f64::consts::E {
        return Err(Error::OutOfValidityRegion(format!(
            "nu^2/(8 d (1-alpha_bar)) = {chernoff_arg:.4} < e"
        )));
    }
    let markov = (2.0 * (1.0 - alpha_bar.sqrt()) / nu) * expected_diff;
    let chernoff =
        (-nu * nu / (16.0 * one_minus) + d / 2.0 - (d / 2.0) * chernoff_arg.ln()).exp();
    Ok(markov + chernoff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Pass,
    Fail,
    Skipped,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Pass => "pass",
            PointStatus::Fail => "fail",
            PointStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundRow {
    pub alpha_bar: f64,
    pub empirical_p: f64,
    pub gamma_bound: Option<f64>,
    pub slack: f64,
    pub status: PointStatus,
}

/// Per-ᾱ empirical exceedance against the analytic bound.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub nu: f64,
    pub dim: usize,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn all_valid_points_pass(&self) -> bool {
        self.rows.iter().all(|r| r.status != PointStatus::Fail)
    }

    /// CSV columns: alpha_bar, empirical_p, gamma_bound, slack, status.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "alpha_bar,empirical_p,gamma_bound,slack,status")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.alpha_bar,
                r.empirical_p,
                r.gamma_bound.map(|g| g.to_string()).unwrap_or_else(|| "nan".into()),
                r.slack,
                r.status.as_str()
            )?;
        }
        Ok(())
    }
}

/// Cleaning-stage verification: for each ᾱ on the grid, draw M quadruples
/// (X0, Y0, Z1, Z2) with independent noise, measure
/// `P(||X_t - X0 - (Y_t - Y0)|| > ν)`, and compare with [`cleaning_gamma_bound`]
/// plus Monte Carlo slack `4·sqrt(p̂(1-p̂)/M)`.
pub fn verify_cleaning_bound<F: Scalar, R: Rng>(
    trial: &TheoremTrial<'_, F, R>,
    alpha_bars: &[f64],
    nu: f64,
    rng: &mut R,
) -> Result<BoundReport> {
    trial.validate()?;
    if trial.coupling != Coupling::IndependentNoise {
        return Err(Error::RejectedConfig(
            "cleaning-stage verifier uses independent noise draws".into(),
        ));
    }
    let mut rows = Vec::with_capacity(alpha_bars.len());
    for &ab in alpha_bars {
        if !(ab > 0.0 && ab <= 1.0) {
            return Err(Error::RejectedInput(format!("alpha_bar {ab} outside (0, 1]")));
        }
        let root_ab = F::from_f64(ab.sqrt());
        let noise_scale = F::from_f64((1.0 - ab).sqrt());
        let mut exceed = 0usize;
        let mut diff_sum = 0.0;
        for _ in 0..trial.samples {
            let x0 = (trial.x0)(rng);
            let y0 = (trial.y0)(rng);
            let pair_diff = x0.sub(&y0)?;
            diff_sum += pair_diff.l2_norm().as_f64();
            // X_t - X0 - (Y_t - Y0) = (sqrt(ᾱ)-1)(X0-Y0) + sqrt(1-ᾱ)(Z1-Z2)
            let mut acc = 0.0f64;
            for &d in pair_diff.data() {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let v = (root_ab - F::one()).as_f64() * d.as_f64()
                    + noise_scale.as_f64() * (z1 - z2);
                acc += v * v;
            }
            if acc.sqrt() > nu {
                exceed += 1;
            }
        }
        let p_hat = exceed as f64 / trial.samples as f64;
        let expected_diff = diff_sum / trial.samples as f64;
        let slack = 4.0 * (p_hat * (1.0 - p_hat) / trial.samples as f64).sqrt();
        let (gamma_bound, status) = if ab == 1.0 {
            // Degenerate point: the difference is identically zero.
            (Some(0.0), if p_hat == 0.0 { PointStatus::Pass } else { PointStatus::Fail })
        } else {
            match cleaning_gamma_bound(ab, nu, trial.dim, expected_diff) {
                Ok(g) => {
                    let status = if p_hat <= g + slack { PointStatus::Pass } else { PointStatus::Fail };
                    (Some(g), status)
                }
                Err(Error::OutOfValidityRegion(_)) => (None, PointStatus::Skipped),
                Err(e) => return Err(e),
            }
        };
        rows.push(BoundRow { alpha_bar: ab, empirical_p: p_hat, gamma_bound, slack, status });
    }
    Ok(BoundReport { nu, dim: trial.dim, rows })
}
