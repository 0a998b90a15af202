//! DP-SGD mechanics: per-sample clipping, noisy aggregation over Poisson
//! lots, and the noise-multiplicity loss.

use crate::autodiff::{Graph, VarId};
use crate::denoiser::{DenoiserParams, ParamVars};
use crate::error::{Error, Result};
use crate::gradient::GradientVector;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

/// Privacy hyperparameters for one training run. The noise multiplier is
/// whatever the calibration step produced for (ε, δ, q, steps); multiplicity
/// never enters the accountant because the k noise-level draws share one
/// clipped per-example gradient.
#[derive(Debug, Clone, Copy)]
pub struct DpConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_norm: f64,
    /// Poisson sampling rate q = expected lot size / dataset size.
    pub sample_rate: f64,
    pub steps: usize,
    pub noise_multiplier: f64,
    pub multiplicity: usize,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::RejectedConfig("epsilon must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::RejectedConfig("delta must lie in (0, 1)".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::RejectedConfig("clip norm must be positive".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::RejectedConfig("sample rate must lie in (0, 1]".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::RejectedConfig("noise multiplier must be nonnegative".into()));
        }
        if self.multiplicity == 0 {
            return Err(Error::RejectedConfig("multiplicity must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            delta: 1e-5,
            clip_norm: 1.0,
            sample_rate: 0.1,
            steps: 0,
            noise_multiplier: 0.0,
            multiplicity: 16,
        }
    }
}

/// `g · min(1, C/||g||)`; the output norm never exceeds C.
pub fn clip<F: Scalar>(g: &GradientVector<F>, clip_norm: F) -> Result<GradientVector<F>> {
    if !(clip_norm > F::zero()) {
        return Err(Error::RejectedInput(format!("clip norm must be positive, got {clip_norm}")));
    }
    if !g.norm().is_finite() {
        return Err(Error::Numerical("non-finite gradient norm".into()));
    }
    if g.norm() <= clip_norm {
        return Ok(g.clone());
    }
    Ok(g.scaled(clip_norm / g.norm()))
}

/// `(Σ clip(g_i, C) + ζ) / L` with `ζ ~ N(0, (σ_noise C)² I)`.
///
/// The divisor is the expected lot size, not the realized one, and the noise
/// draw consumes exactly `dim` standard normals in index order.
pub fn noisy_aggregate<F: Scalar, R: Rng>(
    grads: &[GradientVector<F>],
    dim: usize,
    clip_norm: F,
    noise_multiplier: F,
    expected_lot_size: F,
    rng: &mut R,
) -> Result<GradientVector<F>> {
    if !(expected_lot_size > F::zero()) {
        return Err(Error::RejectedInput("expected lot size must be positive".into()));
    }
    let mut acc = vec![F::zero(); dim];
    for g in grads {
        if g.len() != dim {
            return Err(Error::RejectedInput(format!(
                "gradient length {} does not match dimension {dim}",
                g.len()
            )));
        }
        let clipped = clip(g, clip_norm)?;
        for (a, v) in acc.iter_mut().zip(clipped.values()) {
            *a += *v;
        }
    }
    let scale = noise_multiplier * clip_norm;
    if scale > F::zero() {
        for a in acc.iter_mut() {
            *a += scale * F::from_f64(rng.sample::<f64, _>(StandardNormal));
        }
    }
    for a in acc.iter_mut() {
        *a = *a / expected_lot_size;
    }
    GradientVector::from_values(acc)
}

/// Poisson lot: each index joins independently with probability q.
pub fn poisson_lot<R: Rng>(n: usize, q: f64, rng: &mut R) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<f64>() < q).collect()
}

/// Mean of k per-σ losses for one example, built on the graph so its
/// gradient is the per-example gradient that gets clipped. Averaging over
/// noise levels leaves the sensitivity — and hence the privacy cost —
/// unchanged.
pub fn multiplicity_loss_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    params: &DenoiserParams<F>,
    vars: &ParamVars,
    x0: &Tensor<F>,
    class: Option<usize>,
    draws: &[(F, Vec<F>)],
) -> Result<VarId> {
    if draws.is_empty() {
        return Err(Error::RejectedInput("empty sigma draw list".into()));
    }
    let mut terms = Vec::with_capacity(draws.len());
    for (sigma, eta) in draws {
        terms.push(crate::diffusion::edm_loss_on_graph(
            g, params, vars, x0, class, *sigma, eta,
        )?);
    }
    g.mean_of(terms)
}

/// Draw the k (σ, η) pairs for one example; each noise level gets fresh η.
pub fn draw_multiplicity<F: Scalar, R: Rng>(
    law: &crate::diffusion::SigmaDistribution<F>,
    k: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<(F, Vec<F>)>> {
    if k == 0 {
        return Err(Error::RejectedInput("multiplicity must be >= 1".into()));
    }
    (0..k)
        .map(|_| {
            let sigma = law.sample(rng)?;
            let eta = (0..dim)
                .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            Ok((sigma, eta))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::diffusion::SigmaDistribution;
    use crate::gradient::per_sample_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn clip_leaves_short_gradients() {
        let g = GradientVector::from_values(vec![0.3_f64, 0.4]).unwrap(); // norm 0.5
        let c = clip(&g, 1.0).unwrap();
        assert_eq!(c.values(), g.values());
    }

    #[test]
    fn clip_halves_double_norm() {
        let g = GradientVector::from_values(vec![1.2_f64, 1.6]).unwrap(); // norm 2
        let c = clip(&g, 1.0).unwrap();
        assert!((c.values()[0] - 0.6).abs() < 1e-15);
        assert!((c.values()[1] - 0.8).abs() < 1e-15);
        assert!((c.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clip_zero_is_zero() {
        let g = GradientVector::<f64>::zeros(3);
        let c = clip(&g, 1.0).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clip_is_idempotent_and_scale_invariant() {
        let base = GradientVector::from_values(vec![3.0_f64, 4.0]).unwrap();
        let once = clip(&base, 1.0).unwrap();
        let twice = clip(&once, 1.0).unwrap();
        assert_eq!(once.values(), twice.values());
        // Any direction-preserving scaling λ >= 1 on an already-long gradient
        // clips to the same vector.
        for lambda in [1.0, 2.5, 100.0] {
            let scaled = base.scaled(lambda);
            let c = clip(&scaled, 1.0).unwrap();
            for (a, b) in c.values().iter().zip(once.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_lot_without_noise_is_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let out = noisy_aggregate::<f64, _>(&[], 4, 1.0, 0.0, 3.0, &mut rng).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_gradient_noiseless_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let g = GradientVector::from_values(vec![0.6_f64, 0.8]).unwrap(); // norm 1 = C
        let out = noisy_aggregate(&[g.clone()], 2, 1.0, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(out.values(), g.values());
    }

    #[test]
    fn aggregate_matches_recorded_draw_oracle() {
        let seed = 99u64;
        let grads = vec![
            GradientVector::from_values(vec![3.0_f64, 0.0, 0.0]).unwrap(), // clips to [1,0,0]
            GradientVector::from_values(vec![0.0, 0.5, 0.0]).unwrap(),
            GradientVector::from_values(vec![0.0, 0.0, -2.0]).unwrap(), // clips to [0,0,-1]
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let out = noisy_aggregate(&grads, 3, 1.0, 1.0, 3.0, &mut rng).unwrap();

        // Oracle: clip by hand, replay the same seed's Gaussian draws.
        let mut oracle_rng = ChaCha12Rng::seed_from_u64(seed);
        let zeta: Vec<f64> = (0..3)
            .map(|_| oracle_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let hand_sum = [1.0, 0.5, -1.0];
        for i in 0..3 {
            let expect = (hand_sum[i] + zeta[i]) / 3.0;
            assert!((out.values()[i] - expect).abs() < 1e-15);
        }
    }

    fn cfg() -> DenoiserConfig<f64> {
        DenoiserConfig {
            image_shape: vec![1, 2, 2],
            num_classes: 0,
            hidden: vec![6],
            embed_features: 2,
            sigma_data: 0.5,
        }
    }

    fn x0() -> Tensor<f64> {
        Tensor::new(vec![1, 2, 2], vec![0.2, 0.8, 0.5, 0.1]).unwrap()
    }

    #[test]
    fn multiplicity_one_equals_single_sigma_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let draws = vec![(0.7_f64, vec![0.1, -0.3, 0.6, 0.2])];

        let mut g1 = Graph::new();
        let v1 = params.register(&mut g1);
        let multi =
            multiplicity_loss_on_graph(&mut g1, &params, &v1, &x0(), None, &draws).unwrap();

        let mut g2 = Graph::new();
        let v2 = params.register(&mut g2);
        let single = crate::diffusion::edm_loss_on_graph(
            &mut g2, &params, &v2, &x0(), None, draws[0].0, &draws[0].1,
        )
        .unwrap();

        assert!((g1.scalar(multi) - g2.scalar(single)).abs() < 1e-15);
    }

    #[test]
    fn equal_sigmas_with_shared_eta_collapse_to_k_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let eta = vec![0.4, -0.2, 0.9, -0.6];
        let draws: Vec<(f64, Vec<f64>)> = (0..4).map(|_| (0.5, eta.clone())).collect();

        let mut g1 = Graph::new();
        let v1 = params.register(&mut g1);
        let multi =
            multiplicity_loss_on_graph(&mut g1, &params, &v1, &x0(), None, &draws).unwrap();

        let mut g2 = Graph::new();
        let v2 = params.register(&mut g2);
        let single =
            crate::diffusion::edm_loss_on_graph(&mut g2, &params, &v2, &x0(), None, 0.5, &eta)
                .unwrap();

        assert!((g1.scalar(multi) - g2.scalar(single)).abs() < 1e-12);
    }

    #[test]
    fn empty_sigma_list_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let mut g = Graph::new();
        let v = params.register(&mut g);
        assert!(multiplicity_loss_on_graph(&mut g, &params, &v, &x0(), None, &[]).is_err());
    }

    #[test]
    fn higher_multiplicity_shrinks_gradient_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let params = DenoiserParams::init(cfg(), &mut rng);
        let law = SigmaDistribution::<f64>::edm_default();
        let example = x0();

        let mut variance_for = |k: usize| {
            let resamples = 200;
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(resamples);
            for _ in 0..resamples {
                let draws = draw_multiplicity(&law, k, example.len(), &mut rng).unwrap();
                let per = per_sample_gradients(
                    &params,
                    |g, p, vars, ex: &Tensor<f64>| {
                        multiplicity_loss_on_graph(g, p, vars, ex, None, &draws)
                    },
                    std::slice::from_ref(&example),
                )
                .unwrap();
                grads.push(per[0].values().to_vec());
            }
            let dim = grads[0].len();
            let mut total_var = 0.0;
            for d in 0..dim {
                let mean: f64 = grads.iter().map(|g| g[d]).sum::<f64>() / resamples as f64;
                let var: f64 = grads.iter().map(|g| (g[d] - mean).powi(2)).sum::<f64>()
                    / (resamples - 1) as f64;
                total_var += var;
            }
            total_var
        };

        let v1 = variance_for(1);
        let v16 = variance_for(16);
        assert!(
            v16 < v1,
            "k=16 variance {v16} should be below k=1 variance {v1}"
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clip_norm_bounded_and_idempotent(
                values in proptest::collection::vec(-100.0f64..100.0, 1..24),
                clip_norm in 0.01f64..10.0,
            ) {
                let g = GradientVector::from_values(values).unwrap();
                let once = clip(&g, clip_norm).unwrap();
                prop_assert!(once.norm() <= clip_norm * (1.0 + 1e-12));
                // Idempotent up to rounding: re-clipping a boundary-norm
                // vector can rescale by an ulp.
                let twice = clip(&once, clip_norm).unwrap();
                for (a, b) in once.values().iter().zip(twice.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn poisson_lot_can_be_empty_and_respects_rate() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut sizes = Vec::new();
        for _ in 0..2000 {
            sizes.push(poisson_lot(50, 0.02, &mut rng).len());
        }
        assert!(sizes.iter().any(|&s| s == 0));
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
        assert!((mean - 1.0).abs() < 0.15, "mean lot size {mean}");
    }
}
