//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism, with
//! (ε, δ) conversion and noise calibration.
//!
//! Per-step RDP follows the standard sampled-Gaussian analysis: at integer
//! orders the binomial expansion of `E_{μ0}[(μ/μ0)^α]` evaluated in log
//! space, at fractional orders the two-sided series split at the crossover
//! point of the mixture densities. Composition is additive per order;
//! conversion minimizes `RDP(α) + ln(1/δ)/(α-1)` over a fixed order grid.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::cell::Cell;
use std::io::Write;

/// Fixed order grid: {1.25, 1.5, 2, 3, ..., 64, 128, 256}.
pub fn default_order_grid() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5];
    orders.extend((2..=64).map(f64::from));
    orders.push(128.0);
    orders.push(256.0);
    orders
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> Result<f64> {
    if b == f64::NEG_INFINITY {
        return Ok(a);
    }
    if b > a {
        return Err(Error::Numerical("log_sub of a larger value".into()));
    }
    if a == b {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(a + (-(b - a).exp()).ln_1p())
}

/// `ln erfc(x)` with an asymptotic branch where `erfc` underflows.
fn log_erfc(x: f64) -> f64 {
    if x <= 25.0 {
        let v = erfc(x);
        if v > 0.0 {
            return v.ln();
        }
    }
    // erfc(x) ~ exp(-x²)/(x sqrt(π)) · (1 - 1/(2x²) + 3/(4x⁴))
    -x * x - x.ln() - 0.5 * std::f64::consts::PI.ln()
        + (-0.5 / (x * x) + 0.75 / (x * x * x * x)).ln_1p()
}

fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Per-step RDP of the Poisson-subsampled Gaussian mechanism at order α.
pub fn rdp_subsampled_gaussian(q: f64, noise_multiplier: f64, alpha: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::RejectedInput(format!("q={q} outside (0, 1]")));
    }
    if !(noise_multiplier > 0.0) {
        return Err(Error::RejectedInput(format!(
            "noise multiplier must be positive, got {noise_multiplier}"
        )));
    }
    if !(alpha > 1.0) {
        return Err(Error::RejectedInput(format!("order must exceed 1, got {alpha}")));
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * noise_multiplier * noise_multiplier));
    }
    let log_a = if alpha.fract() == 0.0 {
        compute_log_a_int(q, noise_multiplier, alpha as u64)
    } else {
        compute_log_a_frac(q, noise_multiplier, alpha)?
    };
    Ok(log_a / (alpha - 1.0))
}

fn compute_log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let mut log_a = f64::NEG_INFINITY;
    let a = alpha as f64;
    for k in 0..=alpha {
        let kf = k as f64;
        let term = ln_binomial(a, kf)
            + kf * q.ln()
            + (a - kf) * (1.0 - q).ln()
            + (kf * kf - kf) / (2.0 * sigma * sigma);
        log_a = log_add(log_a, term);
    }
    log_a
}

fn compute_log_a_frac(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    // Split the defining integral at the point where the mixture and the
    // base Gaussian densities cross.
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let mut log_a0 = f64::NEG_INFINITY;
    let mut log_a1 = f64::NEG_INFINITY;
    let sqrt2_sigma = std::f64::consts::SQRT_2 * sigma;

    // Generalized binomial coefficients via the stable recursion
    // b_0 = 1, b_i = b_{i-1} (α - i + 1) / i.
    let mut log_coef = 0.0f64;
    let mut coef_positive = true;
    let mut i = 0u64;
    loop {
        if i > 0 {
            let factor = (alpha - i as f64 + 1.0) / i as f64;
            if factor == 0.0 {
                break; // integer α exhausting the series
            }
            log_coef += factor.abs().ln();
            if factor < 0.0 {
                coef_positive = !coef_positive;
            }
        }
        let fi = i as f64;
        let j = alpha - fi;

        let log_t0 = log_coef + fi * q.ln() + j * (1.0 - q).ln();
        let log_t1 = log_coef + j * q.ln() + fi * (1.0 - q).ln();
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2_sigma);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2_sigma);
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * sigma * sigma) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;

        if coef_positive {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0)?;
            log_a1 = log_sub(log_a1, log_s1)?;
        }

        i += 1;
        if log_s0.max(log_s1) < -30.0 && i as f64 > alpha {
            break;
        }
        // The series can decay only polynomially (the quadratic growth in the
        // exponent is cancelled by the erfc tail), so allow a long run.
        if i > 2_000_000 {
            return Err(Error::Numerical("fractional-order RDP series diverged".into()));
        }
    }
    Ok(log_add(log_a0, log_a1))
}

/// Classic RDP → (ε, δ) conversion: minimize `rdp(α) + ln(1/δ)/(α-1)`.
pub fn epsilon_from_rdp(orders: &[f64], rdp: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::RejectedInput(format!("delta={delta} outside (0, 1)")));
    }
    if orders.len() != rdp.len() || orders.is_empty() {
        return Err(Error::RejectedInput("order grid and rdp values must align".into()));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let eps = orders
        .iter()
        .zip(rdp)
        .map(|(&a, &r)| r + log_inv_delta / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    Ok(eps.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    q: f64,
    noise_multiplier: f64,
    steps: usize,
    rdp_per_step: Vec<f64>,
}

/// Record of privacy consumption: per-step parameters and cumulative RDP
/// over a fixed order grid. Composition concatenates records (coalescing
/// equal-parameter runs) so that splitting a run never changes the ledger.
#[derive(Debug, Clone)]
pub struct PrivacyLedger {
    orders: Vec<f64>,
    segments: Vec<Segment>,
    cache: Cell<Option<(f64, f64)>>,
}

impl PrivacyLedger {
    pub fn new(orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() || orders.iter().any(|&a| a <= 1.0) {
            return Err(Error::RejectedConfig("orders must all exceed 1".into()));
        }
        Ok(Self { orders, segments: Vec::new(), cache: Cell::new(None) })
    }

    pub fn with_default_orders() -> Self {
        Self::new(default_order_grid()).expect("default grid is valid")
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_steps() == 0
    }

    pub fn record_step(&mut self, q: f64, noise_multiplier: f64) -> Result<()> {
        self.record_steps(q, noise_multiplier, 1)
    }

    pub fn record_steps(&mut self, q: f64, noise_multiplier: f64, count: usize) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        self.cache.set(None);
        if let Some(last) = self.segments.last_mut() {
            if last.q == q && last.noise_multiplier == noise_multiplier {
                last.steps += count;
                return Ok(());
            }
        }
        let rdp_per_step = self
            .orders
            .iter()
            .map(|&a| rdp_subsampled_gaussian(q, noise_multiplier, a))
            .collect::<Result<Vec<f64>>>()?;
        self.segments.push(Segment { q, noise_multiplier, steps: count, rdp_per_step });
        Ok(())
    }

    /// Cumulative RDP at every order: the exact sum of per-step RDP.
    pub fn cumulative_rdp(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.orders.len()];
        for seg in &self.segments {
            for (a, r) in acc.iter_mut().zip(&seg.rdp_per_step) {
                *a += seg.steps as f64 * r;
            }
        }
        acc
    }

    /// Reported ε at the given δ. An empty ledger is the identity mechanism
    /// and reports exactly 0.
    pub fn epsilon(&self, delta: f64) -> Result<f64> {
        if let Some((d, e)) = self.cache.get() {
            if d == delta {
                return Ok(e);
            }
        }
        let eps = if self.is_empty() {
            0.0
        } else {
            epsilon_from_rdp(&self.orders, &self.cumulative_rdp(), delta)?
        };
        self.cache.set(Some((delta, eps)));
        Ok(eps)
    }

    /// Merge two ledgers over the same order grid.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.orders != other.orders {
            return Err(Error::RejectedInput("ledger order grids differ".into()));
        }
        let mut out = self.clone();
        out.cache = Cell::new(None);
        for seg in &other.segments {
            if let Some(last) = out.segments.last_mut() {
                if last.q == seg.q && last.noise_multiplier == seg.noise_multiplier {
                    last.steps += seg.steps;
                    continue;
                }
            }
            out.segments.push(seg.clone());
        }
        Ok(out)
    }

    /// CSV columns: step, q, sigma_noise, epsilon.
    pub fn write_csv<W: Write>(&self, w: &mut W, delta: f64) -> Result<()> {
        writeln!(w, "step,q,sigma_noise,epsilon")?;
        let mut acc = vec![0.0; self.orders.len()];
        let mut step = 0usize;
        for seg in &self.segments {
            for _ in 0..seg.steps {
                step += 1;
                for (a, r) in acc.iter_mut().zip(&seg.rdp_per_step) {
                    *a += r;
                }
                let eps = epsilon_from_rdp(&self.orders, &acc, delta)?;
                writeln!(w, "{},{},{},{}", step, seg.q, seg.noise_multiplier, eps)?;
            }
        }
        Ok(())
    }
}

/// Ledger for a homogeneous run of `steps` subsampled-Gaussian steps.
pub fn rdp_account(q: f64, noise_multiplier: f64, steps: usize, orders: Vec<f64>) -> Result<PrivacyLedger> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::RejectedInput(format!("q={q} outside (0, 1]")));
    }
    if !(noise_multiplier > 0.0) {
        return Err(Error::RejectedInput("noise multiplier must be positive".into()));
    }
    let mut ledger = PrivacyLedger::new(orders)?;
    ledger.record_steps(q, noise_multiplier, steps)?;
    Ok(ledger)
}

const CALIBRATION_SIGMA_MAX: f64 = 1e4;
const CALIBRATION_SIGMA_MIN: f64 = 1e-6;

/// Smallest noise multiplier whose accounted ε lands in
/// `[0.999·target, target]`, found by geometric bisection.
pub fn calibrate_noise(epsilon_target: f64, delta: f64, q: f64, steps: usize) -> Result<f64> {
    if !(epsilon_target > 0.0) {
        return Err(Error::RejectedInput("epsilon target must be positive".into()));
    }
    if steps == 0 {
        return Err(Error::RejectedInput("calibration needs at least one step".into()));
    }
    let orders = default_order_grid();
    let eps_at = |sigma: f64| -> Result<f64> {
        rdp_account(q, sigma, steps, orders.clone())?.epsilon(delta)
    };

    let mut hi = CALIBRATION_SIGMA_MAX;
    if eps_at(hi)? > epsilon_target {
        return Err(Error::Infeasible(format!(
            "epsilon {epsilon_target} unreachable even at noise multiplier {CALIBRATION_SIGMA_MAX}"
        )));
    }
    let mut lo = 1e-2;
    while eps_at(lo)? <= epsilon_target {
        lo *= 0.25;
        if lo < CALIBRATION_SIGMA_MIN {
            return Err(Error::Infeasible(
                "epsilon target met with vanishing noise; nothing to calibrate".into(),
            ));
        }
    }

    for _ in 0..200 {
        let eps_hi = eps_at(hi)?;
        if eps_hi >= 0.999 * epsilon_target && eps_hi <= epsilon_target {
            return Ok(hi);
        }
        let mid = (lo * hi).sqrt();
        if eps_at(mid)? <= epsilon_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Numerical("noise calibration did not converge".into()))
}
