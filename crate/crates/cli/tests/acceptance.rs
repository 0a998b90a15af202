//! Acceptance suite: one test per release criterion. Each test prints a
//! single pass line (visible with --nocapture) once its assertions hold.

use dpdiff_core::accountant::{
    calibrate_noise, default_order_grid, epsilon_from_rdp, rdp_account,
};
use dpdiff_core::autodiff::Graph;
use dpdiff_core::dataset::{salt_pepper_dataset, toy_bars, CountingSource, TOY_NUM_CLASSES};
use dpdiff_core::denoiser::{DenoiserConfig, DenoiserParams};
use dpdiff_core::diffusion::{
    alpha_bar_of_sigma, ddpm_forward, edm_forward, edm_loss_on_graph, snr_of_sigma,
    DdpmSchedule, SigmaDistribution,
};
use dpdiff_core::evaluation::{
    cas, frechet_feature_distance, CasSettings, ClassifierKind, FeatureExtractor,
};
use dpdiff_core::pipeline::{
    ddim_sample_labeled, stage_switch_sample, train_nonprivate, train_nonprivate_continue,
    train_staged, Phase1Settings, Phase2Settings, SamplerGrid, TrainRun, TrainSettings,
};
use dpdiff_core::privacy::DpConfig;
use dpdiff_core::stages::{make_stage_plan, StagePlan, Variant};
use dpdiff_core::synthgen::SaltPepperParams;
use dpdiff_core::tensor::Tensor;
use dpdiff_core::theorems::{energy_distance, verify_coarse_convergence, verify_cleaning_bound, Coupling, PointStatus, TheoremTrial};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

const IMAGE: usize = 16;

fn denoiser_cfg(hidden: Vec<usize>, classes: usize) -> DenoiserConfig<f64> {
    DenoiserConfig {
        image_shape: vec![1, IMAGE, IMAGE],
        num_classes: classes,
        hidden,
        embed_features: 6,
        sigma_data: 0.5,
    }
}

// ---------------------------------------------------------------------
// Criterion 1: analytic vs central finite-difference gradients on small
// nets, >= 50 random cases, max relative error <= 1e-4.
// ---------------------------------------------------------------------
#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    let shapes: [(Vec<usize>, Vec<usize>, usize); 3] = [
        (vec![1, 2, 2], vec![6], 0),
        (vec![1, 3, 3], vec![8], 0),
        (vec![1, 2, 2], vec![5, 4], 2),
    ];
    for case in 0..51u64 {
        let (image_shape, hidden, classes) = shapes[case as usize % shapes.len()].clone();
        let cfg = DenoiserConfig {
            image_shape: image_shape.clone(),
            num_classes: classes,
            hidden,
            embed_features: 2,
            sigma_data: 0.5,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1000 + case);
        let params = DenoiserParams::init(cfg.clone(), &mut rng);
        assert!(params.param_count() <= 200, "net too large: {}", params.param_count());

        let dim: usize = image_shape.iter().product();
        let x0 = Tensor::new(
            image_shape.clone(),
            (0..dim).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
        let sigma = (-2.0 + 4.0 * rng.random::<f64>()).exp();
        let eta: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let class = (classes > 0).then(|| (case as usize) % classes);

        let loss_of = |p: &DenoiserParams<f64>| {
            let mut g = Graph::new();
            let vars = p.register(&mut g);
            let l = edm_loss_on_graph(&mut g, p, &vars, &x0, class, sigma, &eta).unwrap();
            (g, vars, l)
        };
        let (g, vars, l) = loss_of(&params);
        let grads = g.backward(l);
        let analytic = params.flatten_grads(&grads, &vars);

        let flat = params.to_flat();
        let h = 1e-5;
        for idx in 0..flat.len() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                let mut f = flat.clone();
                f[idx] += delta;
                p.apply_flat(&f).unwrap();
                let (g, _, l) = loss_of(&p);
                g.scalar(l)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = analytic[idx];
            if an.abs() > 1e-6 || fd.abs() > 1e-6 {
                let rel = (fd - an).abs() / an.abs().max(fd.abs());
                worst = worst.max(rel);
            }
        }
        cases += 1;
    }
    assert!(cases >= 50);
    assert!(worst <= 1e-4, "max relative gradient error {worst}");
    println!(
        "criterion 1 (gradient suite): PASS — {cases} cases, max rel err {worst:.2e}, {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 2: forward-process identities over 10^4 random σ at 1e-12.
// ---------------------------------------------------------------------
#[test]
fn criterion_2_forward_identities() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        // σ spans the operating range [e^-7, e^7], comfortably beyond the
        // sampler's [0.002, 80]; the subtraction in 1-ᾱ loses the stated
        // precision only in far-tail regimes no pipeline touches.
        let sigma = (-7.0 + 14.0 * rng.random::<f64>()).exp();
        let ab = alpha_bar_of_sigma(sigma).unwrap();
        worst = worst.max((ab * (1.0 + sigma * sigma) - 1.0).abs());
        let snr = snr_of_sigma(sigma).unwrap();
        worst = worst.max((snr * sigma * sigma - 1.0).abs());

        let x0 = Tensor::new(vec![8], (0..8).map(|_| rng.random::<f64>()).collect()).unwrap();
        let eta = Tensor::new(
            vec![8],
            (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .unwrap();
        let lhs = edm_forward(&x0, sigma, &eta).unwrap();
        let rhs = x0
            .scaled(ab.sqrt())
            .add_scaled(&eta, (1.0 - ab).sqrt())
            .unwrap();
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    assert!(worst <= 1e-12, "identity deviation {worst}");
    println!(
        "criterion 2 (forward identities): PASS — max deviation {worst:.2e}, {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 3: truncated-σ contract over 10^6 draws per plan; untruncated
// mean within 4 standard errors.
// ---------------------------------------------------------------------
#[test]
fn criterion_3_truncated_sigma_contract() {
    let start = Instant::now();
    let base = SigmaDistribution::<f64>::edm_default();
    let plans: Vec<StagePlan<f64>> = vec![
        make_stage_plan(Variant::Coarse, 2.0, 3.0, &base).unwrap(),
        make_stage_plan(Variant::Cleaning, -4.0, -3.0, &base).unwrap(),
        make_stage_plan(Variant::FineTune, 2.0, f64::INFINITY, &base).unwrap(),
    ];
    let draws_per_law = 1_000_000usize;
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    for plan in &plans {
        for law in [&plan.synthetic_law, &plan.private_law] {
            for _ in 0..draws_per_law / 2 {
                let sigma = law.sample(&mut rng).unwrap();
                assert!(
                    law.contains_ln_sigma(sigma.ln()),
                    "predicate violated: ln σ {} under {:?}",
                    sigma.ln(),
                    law.truncation
                );
            }
        }
    }
    // Untruncated mean check.
    let n = 1_000_000usize;
    let mean = (0..n)
        .map(|_| base.sample(&mut rng).unwrap().ln())
        .sum::<f64>()
        / n as f64;
    let se = 1.2 / (n as f64).sqrt();
    assert!(
        (mean - (-1.2)).abs() <= 4.0 * se,
        "untruncated mean {mean} vs -1.2 (4se {})",
        4.0 * se
    );
    println!(
        "criterion 3 (truncated-sigma contract): PASS — zero violations, mean {mean:.5}, {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 4: accountant against (a) the closed-form full-batch
// minimization, (b) an independent quadrature oracle, (c) calibration
// round trips.
// ---------------------------------------------------------------------

/// Independent numeric oracle: per-step RDP of the subsampled Gaussian by
/// direct Simpson quadrature of the defining integral, in log space.
fn oracle_rdp_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let log_m0 = |x: f64| -x * x / (2.0 * sigma * sigma)
        - (2.0 * std::f64::consts::PI).sqrt().ln()
        - sigma.ln();
    let log_ratio = |x: f64| {
        // ln((1-q) + q exp((2x-1)/(2σ²)))
        let e = (2.0 * x - 1.0) / (2.0 * sigma * sigma);
        let a = (1.0 - q).ln();
        let b = q.ln() + e;
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        hi + (lo - hi).exp().ln_1p()
    };
    let lo_x = -60.0 * sigma.max(1.0);
    let hi_x = 60.0 * sigma.max(1.0) + alpha;
    let n = 400_001usize;
    let h = (hi_x - lo_x) / (n - 1) as f64;
    let mut exps = Vec::with_capacity(n);
    for i in 0..n {
        let x = lo_x + i as f64 * h;
        let w: f64 = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        exps.push(w.ln() + log_m0(x) + alpha * log_ratio(x));
    }
    let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = exps.iter().map(|e| (e - m).exp()).sum();
    let log_a = m + s.ln() + (h / 3.0).ln();
    log_a / (alpha - 1.0)
}

#[test]
fn criterion_4_accountant() {
    let start = Instant::now();
    let delta = 1e-5;

    // (a) Full batch, one step: ε equals the closed-form minimization.
    let sigma = 0.7;
    let ledger = rdp_account(1.0, sigma, 1, default_order_grid()).unwrap();
    let got = ledger.epsilon(delta).unwrap();
    let expect = default_order_grid()
        .iter()
        .map(|&a| a / (2.0 * sigma * sigma) + (1.0 / delta).ln() / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    assert!(
        (got - expect).abs() <= 1e-6,
        "(a) full-batch epsilon {got} vs closed form {expect}"
    );

    // (b) Subsampled case vs the quadrature oracle at 5 parameter points.
    let points = [
        (0.01, 1.0, 10_000usize),
        (0.005, 0.6, 1_000),
        (0.02, 1.2, 20_000),
        (0.05, 2.0, 5_000),
        (0.1, 0.8, 500),
    ];
    let orders = default_order_grid();
    for &(q, s, steps) in &points {
        let eps_impl = rdp_account(q, s, steps, orders.clone())
            .unwrap()
            .epsilon(delta)
            .unwrap();
        let oracle_rdp: Vec<f64> = orders
            .iter()
            .map(|&a| steps as f64 * oracle_rdp_quadrature(q, s, a))
            .collect();
        let eps_oracle = epsilon_from_rdp(&orders, &oracle_rdp, delta).unwrap();
        let rel = (eps_impl - eps_oracle).abs() / eps_oracle;
        assert!(
            rel <= 0.02,
            "(b) q={q} σ={s} steps={steps}: {eps_impl} vs oracle {eps_oracle} (rel {rel:.4})"
        );
    }

    // (c) Calibration round trips ε into [0.999ε, ε].
    let q = 0.02;
    let steps = 4_000;
    for &eps in &[0.2, 0.5, 1.0, 10.0] {
        let s = calibrate_noise(eps, delta, q, steps).unwrap();
        let achieved = rdp_account(q, s, steps, orders.clone())
            .unwrap()
            .epsilon(delta)
            .unwrap();
        assert!(
            achieved <= eps && achieved >= 0.999 * eps,
            "(c) target {eps}: achieved {achieved} at σ={s}"
        );
    }
    println!("criterion 4 (accountant): PASS — {:?}", start.elapsed());
}

// ---------------------------------------------------------------------
// Criterion 5: coarse-stage bound — exact shared-noise identity, analytic
// certificate, terminal energy distance below 0.01.
// ---------------------------------------------------------------------
#[test]
fn criterion_5_coarse_bound() {
    let start = Instant::now();
    let schedule = DdpmSchedule::<f64>::default_linear();
    let mut rng = ChaCha12Rng::seed_from_u64(5);

    // Shared-noise identity to 1e-12 per draw.
    for _ in 0..500 {
        let dim = 16;
        let x0 = Tensor::new(vec![dim], (0..dim).map(|_| rng.random::<f64>()).collect()).unwrap();
        let y0 = Tensor::new(vec![dim], (0..dim).map(|_| rng.random::<f64>()).collect()).unwrap();
        let eta = Tensor::new(
            vec![dim],
            (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .unwrap();
        let n = rng.random_range(1..=schedule.len());
        let xn = ddpm_forward(&x0, n, &schedule, &eta).unwrap();
        let yn = ddpm_forward(&y0, n, &schedule, &eta).unwrap();
        let lhs = xn.sub(&yn).unwrap().l2_norm();
        let rhs = schedule.alpha_bar(n).unwrap().sqrt() * x0.sub(&y0).unwrap().l2_norm();
        assert!((lhs - rhs).abs() <= 1e-12, "identity violated: {lhs} vs {rhs}");
    }

    // Bounded toy distributions: verifier N within the analytic
    // certificate N* = min{ n : sqrt(ᾱ_n) D <= ν } (D = support diameter).
    let dim = 16;
    let diam = (dim as f64).sqrt();
    let nu = 0.5;
    let gamma = 0.05;
    let xs = |rng: &mut ChaCha12Rng| {
        Tensor::<f64>::new(vec![dim], (0..dim).map(|_| rng.random::<f64>()).collect()).unwrap()
    };
    let ys = |rng: &mut ChaCha12Rng| {
        Tensor::<f64>::new(vec![dim], (0..dim).map(|_| rng.random::<f64>()).collect()).unwrap()
    };
    let trial = TheoremTrial {
        x0: &xs,
        y0: &ys,
        dim,
        samples: 5_000,
        coupling: Coupling::SharedNoise,
    };
    let n_analytic = (1..=schedule.len())
        .find(|&n| schedule.alpha_bar(n).unwrap().sqrt() * diam <= nu)
        .unwrap();
    let report = verify_coarse_convergence(&trial, &schedule, nu, gamma, &mut rng).unwrap();
    assert!(
        report.n_star <= n_analytic,
        "N {} exceeds certificate {}",
        report.n_star,
        n_analytic
    );

    // Terminal energy distance between independently drawn marginals of two
    // very different data distributions.
    let bars = toy_bars::<f64>(16, IMAGE, 50).unwrap();
    let sp_params = SaltPepperParams::mnist_mean(IMAGE, IMAGE);
    let t_total = schedule.len();
    let mut forward = |x0: &Tensor<f64>, rng: &mut ChaCha12Rng| {
        let eta = Tensor::new(
            x0.shape().to_vec(),
            (0..x0.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .unwrap();
        ddpm_forward(x0, t_total, &schedule, &eta).unwrap()
    };
    let m = 512usize;
    let xs_term: Vec<Tensor<f64>> = (0..m)
        .map(|i| {
            let x0 = bars[i % bars.len()].0.clone();
            forward(&x0, &mut rng)
        })
        .collect();
    let ys_term: Vec<Tensor<f64>> = (0..m)
        .map(|_| {
            let seed = rng.random::<u64>();
            let y0 = dpdiff_core::synthgen::salt_pepper::<f64>(&sp_params, seed).unwrap();
            forward(&y0, &mut rng)
        })
        .collect();
    let e = energy_distance(&xs_term, &ys_term).unwrap();
    assert!(e < 0.01, "terminal energy distance {e}");

    println!(
        "criterion 5 (coarse-stage bound): PASS — N={} <= N*={}, energy {e:.5}, {:?}",
        report.n_star,
        n_analytic,
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 6: cleaning-stage bound over the ᾱ grid at d=256, ν=2,
// M=20000, with the γ→0 limit monotone on the valid grid.
// ---------------------------------------------------------------------
#[test]
fn criterion_6_cleaning_bound() {
    let start = Instant::now();
    let bars = toy_bars::<f64>(16, IMAGE, 60).unwrap();
    let sp_params = SaltPepperParams::mnist_mean(IMAGE, IMAGE);
    let bars_draw = |rng: &mut ChaCha12Rng| bars[rng.random_range(0..bars.len())].0.clone();
    let sp_draw = |rng: &mut ChaCha12Rng| {
        let seed = rng.random::<u64>();
        dpdiff_core::synthgen::salt_pepper::<f64>(&sp_params, seed).unwrap()
    };
    let trial = TheoremTrial {
        x0: &bars_draw,
        y0: &sp_draw,
        dim: IMAGE * IMAGE,
        samples: 20_000,
        coupling: Coupling::IndependentNoise,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let grid = [0.999, 0.9997, 0.99997];
    let report = verify_cleaning_bound(&trial, &grid, 2.0, &mut rng).unwrap();

    let mut gammas = Vec::new();
    for row in &report.rows {
        assert_ne!(
            row.status,
            PointStatus::Fail,
            "bound violated at alpha_bar {}: p {} vs gamma {:?} + slack {}",
            row.alpha_bar,
            row.empirical_p,
            row.gamma_bound,
            row.slack
        );
        if row.status == PointStatus::Pass {
            gammas.push((row.alpha_bar, row.gamma_bound.unwrap()));
        }
    }
    assert!(!gammas.is_empty(), "no valid grid points");
    // γ must shrink as ᾱ→1 across the valid grid points.
    gammas.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for pair in gammas.windows(2) {
        assert!(
            pair[1].1 <= pair[0].1,
            "gamma not monotone toward alpha_bar = 1: {pair:?}"
        );
    }
    println!(
        "criterion 6 (cleaning-stage bound): PASS — {} valid points, {:?}",
        gammas.len(),
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 7: thresholds subcommand reproduces the published values.
// ---------------------------------------------------------------------
#[test]
fn criterion_7_published_thresholds() {
    let start = Instant::now();
    let dir = tempdir("thresholds");
    let mut out = Vec::new();
    let code = dpdiff_cli::run(
        &args(&["dpdiff", "thresholds", "--out", dir.to_str().unwrap()]),
        &mut out,
    );
    assert_eq!(code, 0);
    let text = String::from_utf8(out).unwrap();

    let cleaning = text
        .lines()
        .find(|l| l.starts_with("cleaning "))
        .expect("cleaning line");
    let fields = parse_fields(cleaning);
    assert_eq!(fields["tau1"], -4.0);
    assert_eq!(fields["tau2"], -3.0);
    assert_eq!(
        (fields["alpha_bar_tau1"] * 1e4).round() as i64,
        9997,
        "alpha_bar at tau1 must round to 0.9997"
    );
    assert_eq!(
        (fields["alpha_bar_tau2"] * 1e3).round() as i64,
        998,
        "alpha_bar at tau2 must round to 0.998"
    );

    let coarse = text.lines().find(|l| l.starts_with("coarse ")).expect("coarse line");
    let fields = parse_fields(coarse);
    assert_eq!(fields["tau1"], 2.0);
    assert_eq!(fields["tau2"], 3.0);

    let curve = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("ln_sigma,alpha_bar,snr\n"));
    std::fs::remove_dir_all(&dir).ok();
    println!("criterion 7 (published thresholds): PASS — {:?}", start.elapsed());
}

// ---------------------------------------------------------------------
// Criteria 8 and 9 shared machinery: the desk-scale toy experiment.
// ---------------------------------------------------------------------

/// Scoring classifier trained on real data plus noise-corrupted copies so
/// generation texture artifacts do not mask content.
fn augmented_real(real: &[(Tensor<f64>, u8)], seed: u64) -> Vec<(Tensor<f64>, u8)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut aug = Vec::new();
    for (img, label) in real {
        aug.push((img.clone(), *label));
        for _ in 0..2 {
            let data: Vec<f64> = img
                .data()
                .iter()
                .map(|&v| {
                    let mut x = v + 0.12 * rng.sample::<f64, _>(StandardNormal);
                    if rng.random::<f64>() < 0.06 {
                        x = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
                    }
                    x.clamp(0.0, 1.0)
                })
                .collect();
            aug.push((Tensor::new(img.shape().to_vec(), data).unwrap(), *label));
        }
    }
    aug
}

fn full_budget() -> Phase1Settings {
    Phase1Settings {
        max_epochs: 1500,
        batch_size: 32,
        learning_rate: 1e-3,
        stop_window: 0,
        stop_rel_improvement: 0.0,
    }
}

fn converge_rule() -> Phase1Settings {
    Phase1Settings {
        max_epochs: 2000,
        batch_size: 32,
        learning_rate: 1e-3,
        stop_window: 5,
        stop_rel_improvement: 0.005,
    }
}

// ---------------------------------------------------------------------
// Criterion 8: stage-switch asymmetry and coarse-variant distance parity
// on the builtin dataset, 3 seeds, non-private.
// ---------------------------------------------------------------------
#[test]
fn criterion_8_toy_asymmetry() {
    let start = Instant::now();
    // Content band for the builtin bars: ᾱ from ~0.98 down to ~0.23,
    // i.e. ln σ in (-2.0, 0.6].
    let band = (-2.0, 0.6);
    let grid = SamplerGrid::<f64>::edm_default(36);
    let law = SigmaDistribution::<f64>::edm_default();
    let mut margins = Vec::new();
    let mut ffd_real_all = Vec::new();
    let mut ffd_coarse_all = Vec::new();

    for seed in 0u64..3 {
        let real = toy_bars::<f64>(24, IMAGE, seed + 1).unwrap();
        let synthetic = salt_pepper_dataset::<f64>(
            &SaltPepperParams::mnist_mean(IMAGE, IMAGE),
            128,
            TOY_NUM_CLASSES,
            seed + 2,
        )
        .unwrap();
        let real_src = CountingSource::new(real.clone()).unwrap();
        let syn_src = CountingSource::new(synthetic).unwrap();

        let (model_real, _) = train_nonprivate(
            &real_src,
            denoiser_cfg(vec![96, 96], TOY_NUM_CLASSES),
            &law,
            &full_budget(),
            seed * 100 + 10,
        )
        .unwrap();
        let (model_syn, _) = train_nonprivate(
            &syn_src,
            denoiser_cfg(vec![96, 96], TOY_NUM_CLASSES),
            &law,
            &full_budget(),
            seed * 100 + 11,
        )
        .unwrap();

        // Held-out scoring classifier (real data only).
        let aug = augmented_real(&real, seed * 100 + 91);
        let cls = CasSettings { epochs: 400, batch_size: None, learning_rate: 5e-3, hidden: 64 };
        let labels: Vec<Option<usize>> = (0..64).map(|i| Some(i % TOY_NUM_CLASSES)).collect();
        let score = |samples: &[Tensor<f64>]| -> f64 {
            let labeled: Vec<(Tensor<f64>, u8)> = samples
                .iter()
                .cloned()
                .zip(labels.iter().map(|c| c.unwrap() as u8))
                .collect();
            cas(&aug, &labeled, ClassifierKind::WideMlp, &cls, seed * 100 + 5)
                .unwrap()
                .accuracy_pct
        };

        let mut rng = ChaCha12Rng::seed_from_u64(seed * 100 + 20);
        let fwd = stage_switch_sample(&model_real, &model_syn, band, &grid, &labels, &mut rng)
            .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed * 100 + 20);
        let rev = stage_switch_sample(&model_syn, &model_real, band, &grid, &labels, &mut rng)
            .unwrap();
        let (a_fwd, a_rev) = (score(&fwd), score(&rev));
        margins.push(a_fwd - a_rev);

        // Coarse-variant (synthetic coarse stage) vs the all-real run.
        let plan = make_stage_plan(Variant::Coarse, 2.0, 3.0, &law).unwrap();
        let (mut model_coarse, _) = train_nonprivate(
            &syn_src,
            denoiser_cfg(vec![96, 96], TOY_NUM_CLASSES),
            &plan.synthetic_law,
            &converge_rule(),
            seed * 100 + 30,
        )
        .unwrap();
        train_nonprivate_continue(
            &mut model_coarse,
            &real_src,
            &plan.private_law,
            &full_budget(),
            seed * 100 + 31,
        )
        .unwrap();

        let fid_labels: Vec<Option<usize>> = (0..80).map(|i| Some(i % TOY_NUM_CLASSES)).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed * 100 + 40);
        let gen_real = ddim_sample_labeled(&model_real, &grid, &fid_labels, &mut rng).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed * 100 + 40);
        let gen_coarse = ddim_sample_labeled(&model_coarse, &grid, &fid_labels, &mut rng).unwrap();
        let real_imgs: Vec<Tensor<f64>> = real.iter().map(|(t, _)| t.clone()).collect();
        let fx = FeatureExtractor::fit(&real_imgs, 64).unwrap();
        ffd_real_all.push(frechet_feature_distance(&fx, &real_imgs, &gen_real).unwrap());
        ffd_coarse_all.push(frechet_feature_distance(&fx, &real_imgs, &gen_coarse).unwrap());
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_margin = mean(&margins);
    let mean_real = mean(&ffd_real_all);
    let mean_coarse = mean(&ffd_coarse_all);
    assert!(
        mean_margin >= 20.0,
        "stage-switch margin {mean_margin:.1} below 20 points (per-seed {margins:?})"
    );
    assert!(
        mean_coarse <= 1.15 * mean_real,
        "coarse-variant FFD {mean_coarse:.3} not within 15% of all-real {mean_real:.3}"
    );
    println!(
        "criterion 8 (toy asymmetry): PASS — margin {mean_margin:.1} pts, FFD {mean_coarse:.2} vs {mean_real:.2}, {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 9: DP ordering at ε = 1, three seeds — staged coarse training
// beats the untruncated baseline at the same step budget.
// ---------------------------------------------------------------------
#[test]
fn criterion_9_dp_ordering() {
    let start = Instant::now();
    let law = SigmaDistribution::<f64>::edm_default();
    let mut ffd_coarse = Vec::new();
    let mut ffd_base = Vec::new();

    for seed in 0u64..3 {
        let real = toy_bars::<f64>(24, IMAGE, seed + 1).unwrap();
        let synthetic = salt_pepper_dataset::<f64>(
            &SaltPepperParams::mnist_mean(IMAGE, IMAGE),
            128,
            TOY_NUM_CLASSES,
            seed + 2,
        )
        .unwrap();
        let real_src = CountingSource::new(real.clone()).unwrap();
        let syn_src = CountingSource::new(synthetic).unwrap();

        let dp = DpConfig {
            epsilon: 1.0,
            delta: 1e-5,
            clip_norm: 1.0,
            sample_rate: 1.0,
            steps: 0,
            noise_multiplier: 0.0,
            multiplicity: 16,
        };
        let phase2 = Phase2Settings { epochs: 12, expected_lot_size: 32, learning_rate: 3e-4 };

        for (variant, tau2, phase1_epochs, bucket) in [
            (Variant::Coarse, 3.0, usize::MAX, &mut ffd_coarse),
            (Variant::FineTune, f64::INFINITY, 0, &mut ffd_base),
        ] {
            let mut phase1 = converge_rule();
            if phase1_epochs == 0 {
                phase1.max_epochs = 0;
            }
            let settings = TrainSettings {
                plan: make_stage_plan(variant, 2.0, tau2, &law).unwrap(),
                denoiser_cfg: denoiser_cfg(vec![96, 96], TOY_NUM_CLASSES),
                phase1,
                phase2: phase2.clone(),
                dp,
                seed: seed * 1000 + 7,
                checkpoint_every: None,
                checkpoint_dir: None,
                log_sigma_draws: false,
            };
            let run = TrainRun { settings, synthetic: &syn_src, private: &real_src };
            let outcome = train_staged(&run).unwrap();
            let eps = outcome.ledger.epsilon(1e-5).unwrap();
            assert!(eps <= 1.0 && eps >= 0.999, "accounted epsilon {eps}");

            let grid = SamplerGrid::<f64>::edm_default(36);
            let fid_labels: Vec<Option<usize>> =
                (0..80).map(|i| Some(i % TOY_NUM_CLASSES)).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(seed * 1000 + 40);
            let gen = ddim_sample_labeled(&outcome.params, &grid, &fid_labels, &mut rng).unwrap();
            let real_imgs: Vec<Tensor<f64>> = real.iter().map(|(t, _)| t.clone()).collect();
            let fx = FeatureExtractor::fit(&real_imgs, 64).unwrap();
            bucket.push(frechet_feature_distance(&fx, &real_imgs, &gen).unwrap());
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mc = mean(&ffd_coarse);
    let mb = mean(&ffd_base);
    assert!(
        mc <= mb,
        "staged coarse FFD {mc:.3} should not exceed baseline {mb:.3} (coarse {ffd_coarse:?}, baseline {ffd_base:?})"
    );
    println!(
        "criterion 9 (dp ordering): PASS — coarse {mc:.2} <= baseline {mb:.2} at eps=1, {:?}",
        start.elapsed()
    );
}

// ---------------------------------------------------------------------
// Criterion 10: privacy-phase isolation and per-step budget safety across
// all variants (small instrumented runs).
// ---------------------------------------------------------------------
#[test]
fn criterion_10_privacy_isolation() {
    let start = Instant::now();
    let law = SigmaDistribution::<f64>::edm_default();
    let size = 8usize;
    let cfg = DenoiserConfig {
        image_shape: vec![1, size, size],
        num_classes: 0,
        hidden: vec![24],
        embed_features: 4,
        sigma_data: 0.5,
    };

    for (variant, tau1, tau2) in [
        (Variant::Coarse, 2.0, 3.0),
        (Variant::Cleaning, -4.0, -3.0),
        (Variant::FineTune, 2.0, f64::INFINITY),
    ] {
        let real = toy_bars::<f64>(6, size, 31).unwrap();
        let synthetic = salt_pepper_dataset::<f64>(
            &SaltPepperParams::mnist_mean(size, size),
            48,
            1,
            32,
        )
        .unwrap();
        let real_src = CountingSource::new(real).unwrap();
        let syn_src = CountingSource::new(synthetic).unwrap();
        let plan = make_stage_plan(variant, tau1, tau2, &law).unwrap();
        let settings = TrainSettings {
            plan: plan.clone(),
            denoiser_cfg: cfg.clone(),
            phase1: Phase1Settings {
                max_epochs: 2,
                batch_size: 16,
                learning_rate: 3e-4,
                stop_window: 0,
                stop_rel_improvement: 0.0,
            },
            phase2: Phase2Settings { epochs: 4, expected_lot_size: 12, learning_rate: 3e-4 },
            dp: DpConfig {
                epsilon: 2.0,
                delta: 1e-5,
                clip_norm: 1.0,
                sample_rate: 1.0,
                steps: 0,
                noise_multiplier: 0.0,
                multiplicity: 4,
            },
            seed: 77,
            checkpoint_every: None,
            checkpoint_dir: None,
            log_sigma_draws: true,
        };
        let run = TrainRun { settings, synthetic: &syn_src, private: &real_src };
        let outcome = train_staged(&run).unwrap();

        assert_eq!(outcome.phase1_private_reads, 0, "{variant:?}: private reads in phase 1");
        assert_eq!(outcome.phase2_synthetic_reads, 0, "{variant:?}: synthetic reads in phase 2");
        assert!(outcome
            .phase1_sigma_draws
            .iter()
            .all(|&ls| plan.synthetic_law.contains_ln_sigma(ls)));
        assert!(outcome
            .phase2_sigma_draws
            .iter()
            .all(|&ls| plan.private_law.contains_ln_sigma(ls)));
        for row in &outcome.metrics {
            assert!(
                row.epsilon_so_far <= 2.0 * (1.0 + 1e-9),
                "{variant:?}: ledger exceeded target mid-run"
            );
        }
    }
    println!("criterion 10 (privacy isolation): PASS — {:?}", start.elapsed());
}

// ---------------------------------------------------------------------

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dpdiff-accept-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn parse_fields(line: &str) -> std::collections::HashMap<String, f64> {
    line.split_whitespace()
        .filter_map(|tok| {
            let (k, v) = tok.split_once('=')?;
            Some((k.to_string(), v.parse().ok()?))
        })
        .collect()
}
