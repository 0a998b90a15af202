//! The two-phase staged trainer, the deterministic DDIM sampler, and the
//! stage-switch / forward-then-clean protocols.
//!
//! Phase 1 trains non-privately on synthetic data with σ restricted to the
//! plan's synthetic band. Phase 2 runs DP-SGD on private data over the
//! plan's private band: per-example multiplicity-k losses, clipping, noisy
//! aggregation over Poisson lots, an Adam step on the aggregate, and a
//! ledger update with a budget check at every step.

use crate::accountant::{calibrate_noise, PrivacyLedger};
use crate::autodiff::Graph;
use crate::dataset::CountingSource;
use crate::denoiser::{Denoiser, DenoiserConfig, DenoiserParams};
use crate::diffusion::edm_forward;
use crate::error::{Error, Result};
use crate::gradient::{per_sample_losses_and_grads, GradientVector};
use crate::optim::{adam_step, AdamState};
use crate::privacy::{draw_multiplicity, multiplicity_loss_on_graph, noisy_aggregate, poisson_lot, DpConfig};
use crate::rng::{SeedSplitter, STREAM_DATA, STREAM_DP_NOISE, STREAM_INIT, STREAM_SIGMA};
use crate::scalar::Scalar;
use crate::stages::StagePlan;
use crate::tensor::Tensor;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use std::io::Write;
use std::path::PathBuf;

/// Decreasing σ grid from `sigma_max` to `sigma_min` with the usual
/// polynomial warp; endpoints are exact.
#[derive(Debug, Clone, Copy)]
pub struct SamplerGrid<F: Scalar> {
    pub sigma_max: F,
    pub sigma_min: F,
    pub steps: usize,
    pub rho: F,
    /// Clamp range for the predicted clean image at each step. Small
    /// denoisers can develop a feedback gain above one on states far from
    /// their training distribution; bounding the prediction to a margin
    /// around the data range keeps the descent stable.
    pub denoised_clamp: Option<(F, F)>,
}

impl<F: Scalar> SamplerGrid<F> {
    pub fn new(sigma_max: F, sigma_min: F, steps: usize, rho: F) -> Result<Self> {
        if !(sigma_max > sigma_min && sigma_min > F::zero()) {
            return Err(Error::RejectedConfig(format!(
                "need sigma_max > sigma_min > 0, got ({sigma_max}, {sigma_min})"
            )));
        }
        if steps < 2 {
            return Err(Error::RejectedConfig("sampler needs at least 2 grid points".into()));
        }
        if !(rho > F::zero()) {
            return Err(Error::RejectedConfig("rho must be positive".into()));
        }
        Ok(Self { sigma_max, sigma_min, steps, rho, denoised_clamp: None })
    }

    /// T_max = 80, T_min = 0.002, ρ = 7, predictions clamped around the
    /// unit data range.
    pub fn edm_default(steps: usize) -> Self {
        let mut grid = Self::new(F::from_f64(80.0), F::from_f64(0.002), steps, F::from_f64(7.0))
            .expect("default grid is valid");
        grid.denoised_clamp = Some((F::from_f64(-0.25), F::from_f64(1.25)));
        grid
    }

    pub fn sigmas(&self) -> Vec<F> {
        let n = self.steps;
        let inv_rho = F::one() / self.rho;
        let a = self.sigma_max.powf(inv_rho);
        let b = self.sigma_min.powf(inv_rho);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let t = F::from_usize(i) / F::from_usize(n - 1);
            out.push((a + (b - a) * t).powf(self.rho));
        }
        out[0] = self.sigma_max;
        out[n - 1] = self.sigma_min;
        out
    }
}

/// Euler probability-flow descent along the grid from `start_index`, with
/// the customary final step to σ = 0 (which evaluates to a plain denoise at
/// the last grid σ).
fn ddim_descend_with<F, D>(
    denoise_at: &D,
    sigmas: &[F],
    clamp: Option<(F, F)>,
    mut x: Tensor<F>,
    start_index: usize,
) -> Result<Tensor<F>>
where
    F: Scalar,
    D: Fn(&Tensor<F>, F) -> Result<Tensor<F>>,
{
    let clamp_pred = |mut d: Tensor<F>| -> Tensor<F> {
        if let Some((lo, hi)) = clamp {
            for v in d.data_mut() {
                *v = v.max(lo).min(hi);
            }
        }
        d
    };
    for i in start_index..sigmas.len() - 1 {
        let sigma = sigmas[i];
        let denoised = clamp_pred(denoise_at(&x, sigma)?);
        let step = (sigmas[i + 1] - sigma) / sigma;
        x = x.add_scaled(&x.sub(&denoised)?, step)?;
        if !x.is_finite() {
            return Err(Error::Numerical(format!("non-finite sampler state at step {i}")));
        }
    }
    // Final Euler step from σ_min to 0 reduces to the denoiser output.
    let last = sigmas.len() - 1;
    let out = clamp_pred(denoise_at(&x, sigmas[last])?);
    if !out.is_finite() {
        return Err(Error::Numerical(format!("non-finite sampler state at step {last}")));
    }
    Ok(out)
}

fn initial_state<F: Scalar, R: Rng>(
    shape: &[usize],
    sigma_max: F,
    rng: &mut R,
) -> Result<Tensor<F>> {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)) * sigma_max)
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Deterministic DDIM batch sampling (stochastic = false): randomness enters
/// only through the initial state.
pub fn ddim_sample<F: Scalar, D: Denoiser<F>, R: Rng>(
    denoiser: &D,
    grid: &SamplerGrid<F>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Tensor<F>>> {
    ddim_sample_labeled(denoiser, grid, &vec![None; n], rng)
}

/// DDIM sampling with one class condition per output image.
pub fn ddim_sample_labeled<F: Scalar, D: Denoiser<F>, R: Rng>(
    denoiser: &D,
    grid: &SamplerGrid<F>,
    labels: &[Option<usize>],
    rng: &mut R,
) -> Result<Vec<Tensor<F>>> {
    let sigmas = grid.sigmas();
    labels
        .iter()
        .map(|&class| {
            let x0 = initial_state(denoiser.image_shape(), grid.sigma_max, rng)?;
            ddim_descend_with(
                &|x: &Tensor<F>, s: F| denoiser.denoise_class(x, s, class),
                &sigmas,
                grid.denoised_clamp,
                x0,
                0,
            )
        })
        .collect()
}

/// DDIM sampling that swaps the denoiser inside a ln σ band: `context`
/// handles steps with `band.0 < ln σ <= band.1`, `other` handles the rest.
pub fn stage_switch_sample<F: Scalar, D1: Denoiser<F>, D2: Denoiser<F>, R: Rng>(
    context: &D1,
    other: &D2,
    band: (F, F),
    grid: &SamplerGrid<F>,
    labels: &[Option<usize>],
    rng: &mut R,
) -> Result<Vec<Tensor<F>>> {
    let (lo, hi) = band;
    if !(lo < hi) {
        return Err(Error::RejectedInput(format!("empty band ({lo}, {hi})")));
    }
    let sigmas = grid.sigmas();
    if lo >= grid.sigma_max.ln() || hi <= grid.sigma_min.ln() {
        return Err(Error::RejectedInput("band lies outside the grid range".into()));
    }
    labels
        .iter()
        .map(|&class| {
            let x0 = initial_state(context.image_shape(), grid.sigma_max, rng)?;
            ddim_descend_with(
                &|x: &Tensor<F>, s: F| {
                    let ls = s.ln();
                    if ls > lo && ls <= hi {
                        context.denoise_class(x, s, class)
                    } else {
                        other.denoise_class(x, s, class)
                    }
                },
                &sigmas,
                grid.denoised_clamp,
                x0,
                0,
            )
        })
        .collect()
}

/// Noise a clean image up to σ = e^τ, then denoise it back down the grid
/// from the nearest grid σ at or below e^τ.
pub fn forward_then_clean<F: Scalar, D: Denoiser<F>, R: Rng>(
    denoiser: &D,
    x: &Tensor<F>,
    tau: F,
    grid: &SamplerGrid<F>,
    class: Option<usize>,
    rng: &mut R,
) -> Result<Tensor<F>> {
    let sigma_tau = tau.exp();
    if !(sigma_tau >= grid.sigma_min && sigma_tau <= grid.sigma_max) {
        return Err(Error::RejectedInput(format!(
            "tau {tau} maps outside the grid's sigma range"
        )));
    }
    let eta = Tensor::new(
        x.shape().to_vec(),
        (0..x.len())
            .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)))
            .collect(),
    )?;
    let noised = edm_forward(x, sigma_tau, &eta)?;
    let sigmas = grid.sigmas();
    let start = sigmas
        .iter()
        .position(|&s| s <= sigma_tau)
        .ok_or_else(|| Error::RejectedInput("no grid sigma at or below tau".into()))?;
    ddim_descend_with(
        &|x: &Tensor<F>, s: F| denoiser.denoise_class(x, s, class),
        &sigmas,
        grid.denoised_clamp,
        noised,
        start,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Synthetic,
    Private,
}

impl Phase {
    pub fn as_u8(self) -> u8 {
        match self {
            Phase::Synthetic => 1,
            Phase::Private => 2,
        }
    }
}

/// One optimizer step's log line.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub phase: Phase,
    pub step: usize,
    pub loss: f64,
    pub ln_sigma_mean: f64,
    pub epsilon_so_far: f64,
}

/// CSV columns: phase, step, loss, ln_sigma_mean, epsilon_so_far.
pub fn write_metrics_csv<W: Write>(w: &mut W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "phase,step,loss,ln_sigma_mean,epsilon_so_far")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.phase.as_u8(),
            r.step,
            r.loss,
            r.ln_sigma_mean,
            r.epsilon_so_far
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Phase1Settings {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Moving-average window for the convergence rule.
    pub stop_window: usize,
    /// Stop once the window mean improves by less than this fraction.
    pub stop_rel_improvement: f64,
}

impl Default for Phase1Settings {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            batch_size: 32,
            learning_rate: 3e-4,
            stop_window: 5,
            stop_rel_improvement: 0.005,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phase2Settings {
    /// Private epochs N; one epoch is ceil(n_private / lot) Poisson lots.
    pub epochs: usize,
    pub expected_lot_size: usize,
    pub learning_rate: f64,
}

impl Default for Phase2Settings {
    fn default() -> Self {
        Self { epochs: 25, expected_lot_size: 32, learning_rate: 3e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSettings<F: Scalar> {
    pub plan: StagePlan<F>,
    pub denoiser_cfg: DenoiserConfig<F>,
    pub phase1: Phase1Settings,
    pub phase2: Phase2Settings,
    pub dp: DpConfig,
    pub seed: u64,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Record every ln σ draw per phase (for law-compliance checks).
    pub log_sigma_draws: bool,
}

/// A staged training run over instrumented data sources.
pub struct TrainRun<'a, F: Scalar> {
    pub settings: TrainSettings<F>,
    pub synthetic: &'a CountingSource<F>,
    pub private: &'a CountingSource<F>,
}

#[derive(Debug)]
pub struct TrainOutcome<F: Scalar> {
    pub params: DenoiserParams<F>,
    pub ledger: PrivacyLedger,
    pub metrics: Vec<MetricsRow>,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    /// Private-source reads observed during phase 1 (must be zero).
    pub phase1_private_reads: u64,
    /// Synthetic-source reads observed during phase 2 (must be zero).
    pub phase2_synthetic_reads: u64,
    pub noise_multiplier: f64,
    /// ln σ of every phase-1 draw, when logging is enabled.
    pub phase1_sigma_draws: Vec<f64>,
    /// ln σ of every phase-2 draw, when logging is enabled.
    pub phase2_sigma_draws: Vec<f64>,
}

fn shuffled_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Minibatch Adam on the mean denoising loss, with the moving-average
/// convergence rule. Shared by the synthetic phase and the non-private
/// baselines.
#[allow(clippy::too_many_arguments)]
fn run_nonprivate_phase<F: Scalar, R: Rng>(
    params: &mut DenoiserParams<F>,
    source: &CountingSource<F>,
    law: &crate::diffusion::SigmaDistribution<F>,
    settings: &Phase1Settings,
    data_rng: &mut R,
    sigma_rng: &mut R,
    metrics: &mut Vec<MetricsRow>,
    sigma_log: Option<&mut Vec<f64>>,
) -> Result<usize> {
    let dim = params.cfg().image_dim();
    let conditional = params.cfg().num_classes > 0;
    let mut adam = AdamState::new(params.param_count(), F::from_f64(settings.learning_rate));
    let mut epoch_losses: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    let mut sigma_log = sigma_log;
    for _epoch in 0..settings.max_epochs {
        let order = shuffled_indices(source.len(), data_rng);
        let mut epoch_loss_sum = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let mut g = Graph::new();
            let vars = params.register(&mut g);
            let mut terms = Vec::with_capacity(chunk.len());
            let mut ln_sigma_sum = 0.0;
            for &idx in chunk {
                let (image, label) = source.get(idx);
                let sigma = law.sample(sigma_rng)?;
                ln_sigma_sum += sigma.ln().as_f64();
                if let Some(log) = sigma_log.as_deref_mut() {
                    log.push(sigma.ln().as_f64());
                }
                let eta: Vec<F> = (0..dim)
                    .map(|_| F::from_f64(sigma_rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                let class = if conditional { Some(label as usize) } else { None };
                terms.push(crate::diffusion::edm_loss_on_graph(
                    &mut g, params, &vars, image, class, sigma, &eta,
                )?);
            }
            let mean = g.mean_of(terms)?;
            let loss = g.scalar(mean).as_f64();
            if !loss.is_finite() {
                return Err(Error::Numerical("non-finite non-private loss".into()));
            }
            let grads = g.backward(mean);
            let flat = params.flatten_grads(&grads, &vars);
            let grad = GradientVector::from_values(flat)?;
            adam_step(&mut adam, params, &grad)?;
            steps += 1;
            epoch_loss_sum += loss;
            epoch_batches += 1;
            metrics.push(MetricsRow {
                phase: Phase::Synthetic,
                step: steps,
                loss,
                ln_sigma_mean: ln_sigma_sum / chunk.len() as f64,
                epsilon_so_far: 0.0,
            });
        }
        epoch_losses.push(epoch_loss_sum / epoch_batches.max(1) as f64);

        // Convergence rule: the w-epoch moving average must keep improving
        // by at least the configured fraction. A zero window disables the
        // rule and runs the full epoch budget.
        let w = settings.stop_window;
        if w > 0 && epoch_losses.len() > w {
            let ma_now: f64 = epoch_losses[epoch_losses.len() - w..].iter().sum::<f64>() / w as f64;
            let ma_prev: f64 = epoch_losses[epoch_losses.len() - w - 1..epoch_losses.len() - 1]
                .iter()
                .sum::<f64>()
                / w as f64;
            if ma_prev.is_finite()
                && ma_prev > 0.0
                && (ma_prev - ma_now) / ma_prev < settings.stop_rel_improvement
            {
                break;
            }
        }
    }
    Ok(steps)
}

/// Plain non-private training on one source under one σ law; the baseline
/// and toy-protocol models come from here.
pub fn train_nonprivate<F: Scalar>(
    source: &CountingSource<F>,
    denoiser_cfg: DenoiserConfig<F>,
    law: &crate::diffusion::SigmaDistribution<F>,
    settings: &Phase1Settings,
    seed: u64,
) -> Result<(DenoiserParams<F>, Vec<MetricsRow>)> {
    if source.is_empty() {
        return Err(Error::RejectedConfig("data source is empty".into()));
    }
    if source.image_shape() != denoiser_cfg.image_shape.as_slice() {
        return Err(Error::RejectedConfig("data shape differs from model shape".into()));
    }
    let splitter = SeedSplitter::new(seed);
    let mut init_rng = splitter.stream(STREAM_INIT);
    let mut data_rng = splitter.stream(STREAM_DATA);
    let mut sigma_rng = splitter.stream(STREAM_SIGMA);
    let mut params = DenoiserParams::init(denoiser_cfg, &mut init_rng);
    let mut metrics = Vec::new();
    run_nonprivate_phase(
        &mut params,
        source,
        law,
        settings,
        &mut data_rng,
        &mut sigma_rng,
        &mut metrics,
        None,
    )?;
    Ok((params, metrics))
}

/// Continue non-private training on existing parameters under a new source
/// and σ law (stage-switch style warm starts).
pub fn train_nonprivate_continue<F: Scalar>(
    params: &mut DenoiserParams<F>,
    source: &CountingSource<F>,
    law: &crate::diffusion::SigmaDistribution<F>,
    settings: &Phase1Settings,
    seed: u64,
) -> Result<Vec<MetricsRow>> {
    if source.is_empty() {
        return Err(Error::RejectedConfig("data source is empty".into()));
    }
    if source.image_shape() != params.cfg().image_shape.as_slice() {
        return Err(Error::RejectedConfig("data shape differs from model shape".into()));
    }
    let splitter = SeedSplitter::new(seed);
    let mut data_rng = splitter.stream(STREAM_DATA);
    let mut sigma_rng = splitter.stream(STREAM_SIGMA);
    let mut metrics = Vec::new();
    run_nonprivate_phase(
        params,
        source,
        law,
        settings,
        &mut data_rng,
        &mut sigma_rng,
        &mut metrics,
        None,
    )?;
    Ok(metrics)
}

/// Run both phases of the staged trainer and return the trained parameters
/// together with the ledger and instrumentation counters.
pub fn train_staged<F: Scalar>(run: &TrainRun<'_, F>) -> Result<TrainOutcome<F>> {
    let s = &run.settings;
    if run.synthetic.is_empty() && s.phase1.max_epochs > 0 {
        return Err(Error::RejectedConfig("synthetic source is empty".into()));
    }
    if run.private.is_empty() {
        return Err(Error::RejectedConfig("private source is empty".into()));
    }
    if run.synthetic.image_shape() != s.denoiser_cfg.image_shape.as_slice()
        || run.private.image_shape() != s.denoiser_cfg.image_shape.as_slice()
    {
        return Err(Error::RejectedConfig("data shape differs from model shape".into()));
    }
    // Resolve the sampling rate and step budget from the data and epoch
    // settings, then validate the completed privacy configuration.
    let n_priv = run.private.len();
    let lot = s.phase2.expected_lot_size.min(n_priv).max(1);
    let q = lot as f64 / n_priv as f64;
    let lots_per_epoch = n_priv.div_ceil(lot);
    let total_steps = s.phase2.epochs * lots_per_epoch;
    {
        let mut resolved = s.dp;
        resolved.sample_rate = q;
        resolved.steps = total_steps;
        resolved.validate()?;
    }

    let splitter = SeedSplitter::new(s.seed);
    let mut init_rng = splitter.stream(STREAM_INIT);
    let mut data_rng = splitter.stream(STREAM_DATA);
    let mut sigma_rng = splitter.stream(STREAM_SIGMA);
    let mut dp_rng = splitter.stream(STREAM_DP_NOISE);

    let mut params = DenoiserParams::init(s.denoiser_cfg.clone(), &mut init_rng);
    let dim = params.cfg().image_dim();
    let class_of = |label: u8| -> Option<usize> {
        if s.denoiser_cfg.num_classes > 0 {
            Some(label as usize)
        } else {
            None
        }
    };
    let mut metrics = Vec::new();
    let mut phase1_sigma_draws = Vec::new();
    let mut phase2_sigma_draws = Vec::new();

    // Phase 1: non-private training on synthetic data, synthetic σ band.
    let private_reads_before = run.private.reads();
    let phase1_steps = run_nonprivate_phase(
        &mut params,
        run.synthetic,
        &s.plan.synthetic_law,
        &s.phase1,
        &mut data_rng,
        &mut sigma_rng,
        &mut metrics,
        s.log_sigma_draws.then_some(&mut phase1_sigma_draws),
    )?;
    let phase1_private_reads = run.private.reads() - private_reads_before;

    // Phase 2: DP training on private data, private σ band.
    let synthetic_reads_before = run.synthetic.reads();
    let noise_multiplier = if s.dp.noise_multiplier > 0.0 {
        s.dp.noise_multiplier
    } else if total_steps > 0 {
        calibrate_noise(s.dp.epsilon, s.dp.delta, q, total_steps)?
    } else {
        0.0
    };

    let mut ledger = PrivacyLedger::with_default_orders();
    let mut phase2_steps = 0usize;
    {
        let mut adam = AdamState::new(params.param_count(), F::from_f64(s.phase2.learning_rate));
        let clip_norm = F::from_f64(s.dp.clip_norm);
        for step in 0..total_steps {
            let lot_indices = poisson_lot(n_priv, q, &mut data_rng);
            // Pre-draw every example's multiplicity (σ, η) set in lot order
            // so gradient evaluation stays deterministic.
            let mut batch = Vec::with_capacity(lot_indices.len());
            let mut ln_sigma_sum = 0.0;
            let mut draw_count = 0usize;
            for &idx in &lot_indices {
                let (image, label) = run.private.get(idx);
                let draws =
                    draw_multiplicity(&s.plan.private_law, s.dp.multiplicity, dim, &mut sigma_rng)?;
                for (sig, _) in &draws {
                    ln_sigma_sum += sig.ln().as_f64();
                    draw_count += 1;
                    if s.log_sigma_draws {
                        phase2_sigma_draws.push(sig.ln().as_f64());
                    }
                }
                batch.push((image.clone(), class_of(label), draws));
            }

            let (mean_loss, per_grads): (f64, Vec<GradientVector<F>>) = if batch.is_empty() {
                (f64::NAN, Vec::new())
            } else {
                let pairs = per_sample_losses_and_grads(
                    &params,
                    |g, p, vars, ex: &(Tensor<F>, Option<usize>, Vec<(F, Vec<F>)>)| {
                        multiplicity_loss_on_graph(g, p, vars, &ex.0, ex.1, &ex.2)
                    },
                    &batch,
                )?;
                let mean =
                    pairs.iter().map(|(l, _)| l.as_f64()).sum::<f64>() / pairs.len() as f64;
                (mean, pairs.into_iter().map(|(_, g)| g).collect())
            };

            let aggregate = noisy_aggregate(
                &per_grads,
                params.param_count(),
                clip_norm,
                F::from_f64(noise_multiplier),
                F::from_usize(lot),
                &mut dp_rng,
            )?;
            adam_step(&mut adam, &mut params, &aggregate)?;
            ledger.record_step(q, noise_multiplier)?;
            phase2_steps += 1;

            let epsilon_so_far = ledger.epsilon(s.dp.delta)?;
            if epsilon_so_far > s.dp.epsilon * (1.0 + 1e-9) {
                return Err(Error::BudgetExhausted {
                    step,
                    epsilon: epsilon_so_far,
                    target: s.dp.epsilon,
                });
            }
            metrics.push(MetricsRow {
                phase: Phase::Private,
                step: phase2_steps,
                loss: mean_loss,
                ln_sigma_mean: if draw_count > 0 {
                    ln_sigma_sum / draw_count as f64
                } else {
                    f64::NAN
                },
                epsilon_so_far,
            });

            if let (Some(every), Some(dir)) = (s.checkpoint_every, s.checkpoint_dir.as_ref()) {
                if every > 0 && phase2_steps % every == 0 {
                    let path = dir.join(format!("checkpoint_{phase2_steps:06}.ckpt"));
                    crate::checkpoint::save_file(&path, &params, Some(&adam))?;
                }
            }
        }
    }
    let phase2_synthetic_reads = run.synthetic.reads() - synthetic_reads_before;

    Ok(TrainOutcome {
        params,
        ledger,
        metrics,
        phase1_steps,
        phase2_steps,
        phase1_private_reads,
        phase2_synthetic_reads,
        noise_multiplier,
        phase1_sigma_draws,
        phase2_sigma_draws,
    })
}
