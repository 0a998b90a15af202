//! Forward diffusion processes and noise-level bookkeeping.
//!
//! Two parameterizations of the same variance-preserving family:
//! the discrete schedule `X_t = sqrt(ᾱ_t) X_0 + sqrt(1-ᾱ_t) η` and the
//! σ-indexed form `X_σ = X_0 / sqrt(1+σ²) + σ η / sqrt(1+σ²)`, linked by
//! `ᾱ_σ = 1/(1+σ²)` and `SNR = 1/σ²`.

use crate::autodiff::{Graph, VarId};
use crate::denoiser::{DenoiserParams, ParamVars};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// `ᾱ_σ = 1/(1+σ²)`, monotone decreasing in σ.
pub fn alpha_bar_of_sigma<F: Scalar>(sigma: F) -> Result<F> {
    if !sigma.is_finite() || sigma < F::zero() {
        return Err(Error::RejectedInput(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(F::one() / (F::one() + sigma * sigma))
}

/// `SNR(σ) = 1/σ²`.
pub fn snr_of_sigma<F: Scalar>(sigma: F) -> Result<F> {
    if !sigma.is_finite() || sigma <= F::zero() {
        return Err(Error::RejectedInput(format!(
            "sigma must be > 0 for a finite SNR, got {sigma}"
        )));
    }
    Ok(F::one() / (sigma * sigma))
}

/// Inverse of `alpha_bar_of_sigma`: `σ = sqrt(1/ᾱ - 1)`.
pub fn sigma_of_alpha_bar<F: Scalar>(alpha_bar: F) -> Result<F> {
    if !(alpha_bar > F::zero() && alpha_bar <= F::one()) {
        return Err(Error::RejectedInput(format!(
            "alpha_bar must lie in (0, 1], got {alpha_bar}"
        )));
    }
    Ok((F::one() / alpha_bar - F::one()).sqrt())
}

/// Discrete β schedule with cached cumulative products ᾱ_t (ᾱ_0 = 1).
#[derive(Debug, Clone)]
pub struct DdpmSchedule<F: Scalar> {
    betas: Vec<F>,
    alpha_bars: Vec<F>, // index t in 0..=T
}

impl<F: Scalar> DdpmSchedule<F> {
    pub fn new(betas: Vec<F>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::RejectedConfig("empty beta schedule".into()));
        }
        if betas.iter().any(|&b| !(b >= F::zero() && b < F::one())) {
            return Err(Error::RejectedConfig("betas must satisfy 0 <= beta < 1".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(F::one());
        let mut acc = F::one();
        for &b in &betas {
            acc = acc * (F::one() - b);
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Linear β ramp, the toy-experiment default being 1e-4 → 0.02 over 1000.
    pub fn linear(beta_start: F, beta_end: F, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::RejectedConfig("steps must be positive".into()));
        }
        let betas = (0..steps)
            .map(|t| {
                if steps == 1 {
                    beta_start
                } else {
                    let frac = F::from_usize(t) / F::from_usize(steps - 1);
                    beta_start + (beta_end - beta_start) * frac
                }
            })
            .collect();
        Self::new(betas)
    }

    pub fn default_linear() -> Self {
        Self::linear(F::from_f64(1e-4), F::from_f64(0.02), 1000).expect("valid default schedule")
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[F] {
        &self.betas
    }

    /// ᾱ_t for t in 0..=T.
    pub fn alpha_bar(&self, t: usize) -> Result<F> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or_else(|| Error::RejectedInput(format!("t={} out of range 0..={}", t, self.len())))
    }

    /// ln σ equivalent of step t via ᾱ_t = 1/(1+σ²).
    pub fn ln_sigma_of_t(&self, t: usize) -> Result<F> {
        let ab = self.alpha_bar(t)?;
        Ok(sigma_of_alpha_bar(ab)?.ln())
    }
}

/// `X_t = sqrt(ᾱ_t) x0 + sqrt(1-ᾱ_t) η` for 1 <= t <= T.
pub fn ddpm_forward<F: Scalar>(
    x0: &Tensor<F>,
    t: usize,
    schedule: &DdpmSchedule<F>,
    eta: &Tensor<F>,
) -> Result<Tensor<F>> {
    if t == 0 || t > schedule.len() {
        return Err(Error::RejectedInput(format!(
            "t={} outside 1..={}",
            t,
            schedule.len()
        )));
    }
    if !x0.same_shape(eta) {
        return Err(Error::RejectedInput("eta shape differs from x0".into()));
    }
    let ab = schedule.alpha_bar(t)?;
    x0.scaled(ab.sqrt()).add_scaled(eta, (F::one() - ab).sqrt())
}

/// `X_σ = x0 / sqrt(1+σ²) + σ η / sqrt(1+σ²)`.
pub fn edm_forward<F: Scalar>(x0: &Tensor<F>, sigma: F, eta: &Tensor<F>) -> Result<Tensor<F>> {
    if !sigma.is_finite() || sigma < F::zero() {
        return Err(Error::RejectedInput(format!("sigma must be >= 0, got {sigma}")));
    }
    if !x0.same_shape(eta) {
        return Err(Error::RejectedInput("eta shape differs from x0".into()));
    }
    let denom = (F::one() + sigma * sigma).sqrt();
    x0.scaled(F::one() / denom).add_scaled(eta, sigma / denom)
}

/// One-sided truncation of the ln σ law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation<F: Scalar> {
    None,
    /// Keep `ln σ <= tau`.
    LowerTailKept(F),
    /// Keep `ln σ > tau` (strict).
    UpperTailKept(F),
}

/// Log-normal noise-level law with optional one-sided truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaDistribution<F: Scalar> {
    pub p_mean: F,
    pub p_std: F,
    pub truncation: Truncation<F>,
}

impl<F: Scalar> SigmaDistribution<F> {
    pub fn new(p_mean: F, p_std: F, truncation: Truncation<F>) -> Result<Self> {
        if !(p_std > F::zero()) || !p_std.is_finite() || !p_mean.is_finite() {
            return Err(Error::RejectedConfig(format!(
                "invalid sigma law: p_mean={p_mean}, p_std={p_std}"
            )));
        }
        match truncation {
            Truncation::LowerTailKept(t) | Truncation::UpperTailKept(t) if !t.is_finite() => {
                return Err(Error::RejectedConfig("truncation threshold must be finite".into()));
            }
            _ => {}
        }
        Ok(Self { p_mean, p_std, truncation })
    }

    /// The published EDM defaults the σ-scheduling inherits.
    pub fn edm_default() -> Self {
        Self {
            p_mean: F::from_f64(-1.2),
            p_std: F::from_f64(1.2),
            truncation: Truncation::None,
        }
    }

    pub fn with_truncation(&self, truncation: Truncation<F>) -> Result<Self> {
        Self::new(self.p_mean, self.p_std, truncation)
    }

    /// Probability mass the truncation keeps.
    pub fn kept_mass(&self) -> f64 {
        let normal = Normal::new(self.p_mean.as_f64(), self.p_std.as_f64()).expect("valid normal");
        match self.truncation {
            Truncation::None => 1.0,
            Truncation::LowerTailKept(t) => normal.cdf(t.as_f64()),
            Truncation::UpperTailKept(t) => 1.0 - normal.cdf(t.as_f64()),
        }
    }

    pub fn contains_ln_sigma(&self, ln_sigma: F) -> bool {
        match self.truncation {
            Truncation::None => true,
            Truncation::LowerTailKept(t) => ln_sigma <= t,
            Truncation::UpperTailKept(t) => ln_sigma > t,
        }
    }

    /// Inverse-CDF draw from the conditioned normal; the predicate guard only
    /// re-draws when floating-point rounding lands exactly on the boundary.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<F> {
        let kept = self.kept_mass();
        if kept < 1e-12 {
            return Err(Error::RejectedConfig(format!(
                "truncation keeps probability mass {kept:.3e} < 1e-12"
            )));
        }
        let mean = self.p_mean.as_f64();
        let std = self.p_std.as_f64();
        let normal = Normal::new(mean, std).expect("valid normal");
        for _ in 0..64 {
            let ln_sigma = match self.truncation {
                Truncation::None => {
                    let u: f64 = rng.sample(rand::distr::Open01);
                    normal.inverse_cdf(u)
                }
                Truncation::LowerTailKept(t) => {
                    let p = normal.cdf(t.as_f64());
                    let u: f64 = rng.sample(rand::distr::OpenClosed01);
                    normal.inverse_cdf((u * p).min(p))
                }
                Truncation::UpperTailKept(t) => {
                    let p = normal.cdf(t.as_f64());
                    let u: f64 = rng.sample(rand::distr::Open01);
                    normal.inverse_cdf(p + u * (1.0 - p))
                }
            };
            let ln_sigma = F::from_f64(ln_sigma);
            if ln_sigma.is_finite() && self.contains_ln_sigma(ln_sigma) {
                return Ok(ln_sigma.exp());
            }
        }
        Err(Error::Numerical(
            "truncated sigma sampler failed to satisfy its predicate".into(),
        ))
    }
}

/// Draw σ from a (possibly truncated) log-normal law.
pub fn sample_sigma<F: Scalar, R: Rng>(dist: &SigmaDistribution<F>, rng: &mut R) -> Result<F> {
    dist.sample(rng)
}

/// Weighting and σ law for the denoising score-matching loss.
#[derive(Debug, Clone)]
pub struct EdmLossConfig<F: Scalar> {
    pub sigma_data: F,
    pub sigma_law: SigmaDistribution<F>,
}

impl<F: Scalar> EdmLossConfig<F> {
    pub fn new(sigma_data: F, sigma_law: SigmaDistribution<F>) -> Result<Self> {
        if !(sigma_data > F::zero()) {
            return Err(Error::RejectedConfig("sigma_data must be positive".into()));
        }
        Ok(Self { sigma_data, sigma_law })
    }
}

/// `λ(σ) = (σ² + σ_data²) / (σ σ_data)²`.
pub fn edm_loss_weight<F: Scalar>(sigma: F, sigma_data: F) -> F {
    let s2 = sigma * sigma;
    let d2 = sigma_data * sigma_data;
    (s2 + d2) / (s2 * d2)
}

/// Build the weighted denoising loss `λ(σ)·||D(X_σ, σ) - x0||²` on a graph
/// for one example at a given (σ, η) draw.
pub fn edm_loss_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    params: &DenoiserParams<F>,
    vars: &ParamVars,
    x0: &Tensor<F>,
    class: Option<usize>,
    sigma: F,
    eta: &[F],
) -> Result<VarId> {
    if eta.len() != x0.len() {
        return Err(Error::RejectedInput("eta length differs from x0".into()));
    }
    let eta_t = Tensor::new(x0.shape().to_vec(), eta.to_vec())?;
    let x_sigma = edm_forward(x0, sigma, &eta_t)?;
    let denoised = params.denoise_on_graph(g, vars, &x_sigma, sigma, class)?;
    let target = g.leaf(x0.data().to_vec());
    let resid = g.sub(denoised, target)?;
    let sq = g.sum_sq(resid);
    Ok(g.scale(sq, edm_loss_weight(sigma, params.cfg().sigma_data)))
}

/// A σ draw together with the loss value it produced.
#[derive(Debug, Clone, Copy)]
pub struct LossDraw<F: Scalar> {
    pub sigma: F,
    pub loss: F,
}

/// Evaluate the loss at a fresh (σ, η) draw for any denoiser. Used for
/// monitoring and tests; training differentiates `edm_loss_on_graph`.
pub fn edm_loss_value<F: Scalar, D: crate::denoiser::Denoiser<F>, R: Rng>(
    denoiser: &D,
    x0: &Tensor<F>,
    class: Option<usize>,
    cfg: &EdmLossConfig<F>,
    rng: &mut R,
) -> Result<LossDraw<F>> {
    let sigma = cfg.sigma_law.sample(rng)?;
    let eta_t = Tensor::new(
        x0.shape().to_vec(),
        (0..x0.len())
            .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)))
            .collect(),
    )?;
    let x_sigma = edm_forward(x0, sigma, &eta_t)?;
    let denoised = denoiser.denoise_class(&x_sigma, sigma, class)?;
    let resid = denoised.sub(x0)?;
    let sq: F = resid.data().iter().map(|v| *v * *v).sum();
    Ok(LossDraw { sigma, loss: edm_loss_weight(sigma, cfg.sigma_data) * sq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{edm_precond, PointOracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn alpha_bar_basics() {
        assert!((alpha_bar_of_sigma(0.0_f64).unwrap() - 1.0).abs() < 1e-15);
        assert!((alpha_bar_of_sigma(1.0_f64).unwrap() - 0.5).abs() < 1e-15);
        assert!(alpha_bar_of_sigma(-0.1_f64).is_err());
        // Threshold anchors: ln σ = -3 and -4.
        assert!((alpha_bar_of_sigma((-3.0_f64).exp()).unwrap() - 0.998).abs() < 5e-4);
        assert!((alpha_bar_of_sigma((-4.0_f64).exp()).unwrap() - 0.9997).abs() < 5e-5);
    }

    #[test]
    fn snr_basics() {
        assert!((snr_of_sigma(1.0_f64).unwrap() - 1.0).abs() < 1e-15);
        assert!((snr_of_sigma(0.1_f64).unwrap() - 100.0).abs() < 1e-10);
        assert!(snr_of_sigma(0.0_f64).is_err());
        // The elbow anchor: ln σ = 2 gives SNR = e^{-4}.
        let s = (2.0_f64).exp();
        assert!((snr_of_sigma(s).unwrap() - (-4.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn ddpm_zero_betas_identity() {
        let schedule = DdpmSchedule::new(vec![0.0_f64; 10]).unwrap();
        let x0 = Tensor::<f64>::new(vec![3], vec![0.2, 0.5, -0.1]).unwrap();
        let eta = Tensor::<f64>::new(vec![3], vec![1.0, -1.0, 0.5]).unwrap();
        for t in 1..=10 {
            let xt = ddpm_forward(&x0, t, &schedule, &eta).unwrap();
            assert!(xt.max_abs_diff(&x0) < 1e-15);
        }
    }

    #[test]
    fn ddpm_no_noise_scales_by_sqrt_alpha_bar() {
        let schedule = DdpmSchedule::<f64>::default_linear();
        let x0 = Tensor::<f64>::new(vec![2], vec![1.0, -2.0]).unwrap();
        let eta = Tensor::<f64>::zeros(vec![2]);
        let t = 400;
        let xt = ddpm_forward(&x0, t, &schedule, &eta).unwrap();
        let ab = schedule.alpha_bar(t).unwrap();
        assert!(xt.max_abs_diff(&x0.scaled(ab.sqrt())) < 1e-15);
    }

    #[test]
    fn ddpm_alpha_bar_matches_direct_product_oracle() {
        let schedule = DdpmSchedule::<f64>::default_linear();
        // Oracle: direct product over the betas, recomputed here.
        let mut prod = 1.0_f64;
        for &b in schedule.betas() {
            prod *= 1.0 - b;
        }
        let ab = schedule.alpha_bar(1000).unwrap();
        assert!((ab - prod).abs() <= 1e-18 + 1e-12 * prod.abs());

        let x0 = Tensor::<f64>::new(vec![2], vec![0.7, 0.3]).unwrap();
        let eta = Tensor::<f64>::new(vec![2], vec![0.5, -0.5]).unwrap();
        let xt = ddpm_forward(&x0, 1000, &schedule, &eta).unwrap();
        let expect = x0
            .scaled(prod.sqrt())
            .add_scaled(&eta, (1.0 - prod).sqrt())
            .unwrap();
        assert!(xt.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn ddpm_t_out_of_range_rejected() {
        let schedule = DdpmSchedule::<f64>::default_linear();
        let x0 = Tensor::<f64>::zeros(vec![2]);
        let eta = Tensor::<f64>::zeros(vec![2]);
        assert!(ddpm_forward(&x0, 0, &schedule, &eta).is_err());
        assert!(ddpm_forward(&x0, 1001, &schedule, &eta).is_err());
    }

    #[test]
    fn edm_forward_limits() {
        let x0 = Tensor::<f64>::new(vec![2], vec![0.4, -0.6]).unwrap();
        let eta = Tensor::<f64>::new(vec![2], vec![1.0, 2.0]).unwrap();
        // σ = 0 is the identity.
        assert!(edm_forward(&x0, 0.0, &eta).unwrap().max_abs_diff(&x0) < 1e-15);
        // σ = 1 is the balanced mix.
        let mix = edm_forward(&x0, 1.0, &eta).unwrap();
        let expect = x0.add_scaled(&eta, 1.0).unwrap().scaled(1.0 / 2.0_f64.sqrt());
        assert!(mix.max_abs_diff(&expect) < 1e-15);
        // Large σ forgets the data.
        let far = edm_forward(&x0, 1e6, &eta).unwrap();
        assert!(far.max_abs_diff(&eta) < 1e-5);
        assert!(edm_forward(&x0, -1.0, &eta).is_err());
    }

    #[test]
    fn ddpm_forward_is_affine_in_x0_under_shared_eta() {
        // forward(a·x0) - a·forward(x0) = (1-a)·sqrt(1-ᾱ_t)·η
        let schedule = DdpmSchedule::<f64>::default_linear();
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..50 {
            let x0 = Tensor::<f64>::new(
                vec![6],
                (0..6).map(|_| rng.random::<f64>()).collect(),
            )
            .unwrap();
            let eta = Tensor::<f64>::new(
                vec![6],
                (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            )
            .unwrap();
            let a = 0.25 + rng.random::<f64>();
            let t = rng.random_range(1..=schedule.len());
            let lhs = ddpm_forward(&x0.scaled(a), t, &schedule, &eta)
                .unwrap()
                .add_scaled(&ddpm_forward(&x0, t, &schedule, &eta).unwrap(), -a)
                .unwrap();
            let ab = schedule.alpha_bar(t).unwrap();
            let rhs = eta.scaled((1.0 - a) * (1.0 - ab).sqrt());
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn upper_tail_sampler_respects_predicate() {
        let law = SigmaDistribution::new(-1.2_f64, 1.2, Truncation::UpperTailKept(0.5)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20_000 {
            let s = law.sample(&mut rng).unwrap();
            assert!(s.ln() > 0.5);
        }
    }

    #[test]
    fn untruncated_sampler_mean_matches_law() {
        let law = SigmaDistribution::<f64>::edm_default();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| law.sample(&mut rng).unwrap().ln())
            .sum::<f64>()
            / n as f64;
        let se = 1.2 / (n as f64).sqrt();
        assert!(
            (mean - (-1.2)).abs() < 4.0 * se,
            "mean {mean} vs -1.2 (4se {})",
            4.0 * se
        );
    }

    #[test]
    fn lower_tail_kept_at_mean_matches_analytic_truncated_mean() {
        // For X ~ N(μ, s²) | X <= μ the mean is μ - s·sqrt(2/π).
        let mu = -1.2_f64;
        let s = 1.2_f64;
        let law = SigmaDistribution::new(mu, s, Truncation::LowerTailKept(mu)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| law.sample(&mut rng).unwrap().ln())
            .sum::<f64>()
            / n as f64;
        let expect = mu - s * (2.0 / std::f64::consts::PI).sqrt();
        // Std of the kept half-normal is s·sqrt(1 - 2/π).
        let half_std = s * (1.0 - 2.0 / std::f64::consts::PI).sqrt();
        let se = half_std / (n as f64).sqrt();
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean {mean} vs {expect} (4se {})",
            4.0 * se
        );
    }

    #[test]
    fn vanishing_kept_mass_rejected() {
        let law = SigmaDistribution::new(0.0_f64, 1.0, Truncation::UpperTailKept(9.0)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        assert!(matches!(law.sample(&mut rng), Err(Error::RejectedConfig(_))));
    }

    #[test]
    fn perfect_oracle_denoiser_gives_zero_loss() {
        let x0 = Tensor::<f64>::new(vec![1, 2, 2], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let oracle = PointOracle(x0.clone());
        let cfg = EdmLossConfig::new(0.5, SigmaDistribution::edm_default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..32 {
            let draw = edm_loss_value(&oracle, &x0, None, &cfg, &mut rng).unwrap();
            assert!(draw.loss.abs() < 1e-24);
        }
    }

    #[test]
    fn zero_net_loss_matches_hand_formula() {
        // With an all-zero network, D(X_σ, σ) = c_skip·X_σ, so the loss is
        // λ(σ)·||c_skip·X_σ - x0||², evaluated by hand here.
        use crate::denoiser::{DenoiserConfig, DenoiserParams};
        let cfg = DenoiserConfig::<f64> {
            image_shape: vec![1, 2, 2],
            num_classes: 0,
            hidden: vec![4],
            embed_features: 2,
            sigma_data: 0.5,
        };
        let params = DenoiserParams::zeros(cfg);
        let x0 = Tensor::new(vec![1, 2, 2], vec![0.9, 0.1, 0.5, 0.3]).unwrap();
        let sigma = 0.5_f64;
        let eta = [0.3, -0.7, 1.1, 0.2];

        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let loss = edm_loss_on_graph(&mut g, &params, &vars, &x0, None, sigma, &eta).unwrap();
        let got = g.scalar(loss);

        let pre = edm_precond(sigma, 0.5);
        let denom = (1.0 + sigma * sigma).sqrt();
        let mut sq = 0.0;
        for i in 0..4 {
            let xs = x0.data()[i] / denom + sigma * eta[i] / denom;
            let r = pre.c_skip * xs - x0.data()[i];
            sq += r * r;
        }
        let expect = edm_loss_weight(sigma, 0.5) * sq;
        assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn truncated_loss_draws_respect_law() {
        let x0 = Tensor::<f64>::new(vec![1, 2, 2], vec![0.2; 4]).unwrap();
        let oracle = PointOracle(x0.clone());
        let law = SigmaDistribution::new(-1.2_f64, 1.2, Truncation::UpperTailKept(2.0)).unwrap();
        let cfg = EdmLossConfig::new(0.5, law).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        for _ in 0..500 {
            let draw = edm_loss_value(&oracle, &x0, None, &cfg, &mut rng).unwrap();
            assert!(draw.sigma.ln() > 2.0);
        }
    }
}
