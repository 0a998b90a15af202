//! Command-line orchestration: one experiment per invocation, every run
//! echoing a resolved-config file so it can be reproduced exactly.

pub mod config;
pub mod idx;

use clap::{Args, Parser, Subcommand};
use config::{DatasetSpec, ExperimentConfig, SyntheticKind};
use dpdiff_core::dataset::{
    dead_leaves_dataset, salt_pepper_dataset, toy_bars, CountingSource, TOY_NUM_CLASSES,
};
use dpdiff_core::denoiser::DenoiserParams;
use dpdiff_core::diffusion::alpha_bar_of_sigma;
use dpdiff_core::error::Error;
use dpdiff_core::evaluation::{
    cas, frechet_feature_distance, CasSettings, ClassifierKind, FeatureExtractor,
    MetricsReportRow,
};
use dpdiff_core::pipeline::{
    ddim_sample_labeled, forward_then_clean, stage_switch_sample, train_staged, write_metrics_csv,
    SamplerGrid, TrainRun,
};
use dpdiff_core::rng::{SeedSplitter, STREAM_SAMPLER};
use dpdiff_core::stages::{self, CurveTable};
use dpdiff_core::synthgen::{DeadLeavesParams, DiskBudget, SaltPepperParams};
use dpdiff_core::tensor::Tensor;
use dpdiff_core::theorems::{verify_coarse_convergence, verify_cleaning_bound, Coupling, TheoremTrial};
use dpdiff_core::{accountant, checkpoint, io as tio};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const OUT_ROOT_ENV: &str = "DPDIFF_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "dpdiff", version, about = "Staged differentially private diffusion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Master seed; fans out into named streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (joined under $DPDIFF_OUT_ROOT when relative).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Experiment config JSON; explicit flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate programmatic synthetic images.
    GenSynthetic {
        #[command(flatten)]
        common: CommonArgs,
        /// dead-leaves | salt-pepper
        #[arg(long)]
        kind: String,
        /// White-pixel probability for salt-pepper.
        #[arg(long, default_value_t = 0.13)]
        p: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        /// Disk budget for dead-leaves; omit for full coverage.
        #[arg(long)]
        disks: Option<usize>,
    },
    /// Emit the ᾱ/SNR curve and the stage thresholds.
    Thresholds {
        #[command(flatten)]
        common: CommonArgs,
        /// Where to write the curve CSV.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Run the staged two-phase trainer from a config file.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample from a trained checkpoint with the deterministic sampler.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 36)]
        steps: usize,
        /// Condition every sample on this class (conditional models).
        #[arg(long)]
        class: Option<usize>,
    },
    /// Sample while switching denoisers inside a ln σ band.
    StageSwitch {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint used inside the band.
        #[arg(long)]
        context: PathBuf,
        /// Checkpoint used outside the band.
        #[arg(long)]
        other: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        band_lo: f64,
        #[arg(long, allow_hyphen_values = true)]
        band_hi: f64,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 36)]
        steps: usize,
    },
    /// Noise test images to ln σ = tau and denoise them back.
    CleanTest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        tau: f64,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 36)]
        steps: usize,
    },
    /// Monte Carlo verification of the two stage bounds.
    VerifyTheorems {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Fréchet feature distance and classifier accuracy for generated data.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding images.dpt and labels.csv from `sample`.
        #[arg(long)]
        generated: PathBuf,
        /// Label for the metrics report row.
        #[arg(long, default_value = "unknown")]
        method: String,
        #[arg(long, default_value_t = f64::NAN)]
        epsilon: f64,
        #[arg(long, default_value_t = 64)]
        features: usize,
    },
    /// Calibrate the noise multiplier and report the accounted ε.
    Account {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        steps: usize,
        /// Account an explicit noise multiplier instead of calibrating.
        #[arg(long)]
        noise: Option<f64>,
        /// Write the per-step ledger CSV here.
        #[arg(long)]
        ledger_out: Option<PathBuf>,
    },
}

/// Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 missing or
/// malformed files, 5 numerical/infeasible failures.
pub fn run<W: Write>(args: &[String], out: &mut W) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/version through the error path
            if e.use_stderr() {
                eprintln!("error: code=usage message={e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = match &e {
                Error::RejectedConfig(_) | Error::RejectedInput(_) => 3,
                Error::Io(_) | Error::Malformed(_) => 4,
                _ => 5,
            };
            let name = match &e {
                Error::RejectedConfig(_) => "config",
                Error::RejectedInput(_) => "input",
                Error::Io(_) => "io",
                Error::Malformed(_) => "malformed",
                Error::Infeasible(_) => "infeasible",
                Error::BudgetExhausted { .. } => "budget",
                _ => "numerical",
            };
            eprintln!("error: code={name} message={e}");
            code
        }
    }
}

type CResult = dpdiff_core::error::Result<()>;

fn dispatch<W: Write>(cli: Cli, out: &mut W) -> CResult {
    match cli.command {
        Command::GenSynthetic { common, kind, p, n, size, classes, disks } => {
            cmd_gen_synthetic(common, &kind, p, n, size, classes, disks, out)
        }
        Command::Thresholds { common, curve_out } => cmd_thresholds(common, curve_out, out),
        Command::Train { common } => cmd_train(common, out),
        Command::Sample { common, checkpoint, n, steps, class } => {
            cmd_sample(common, &checkpoint, n, steps, class, out)
        }
        Command::StageSwitch { common, context, other, band_lo, band_hi, n, steps } => {
            cmd_stage_switch(common, &context, &other, (band_lo, band_hi), n, steps, out)
        }
        Command::CleanTest { common, checkpoint, tau, n, steps } => {
            cmd_clean_test(common, &checkpoint, tau, n, steps, out)
        }
        Command::VerifyTheorems { common, samples } => cmd_verify_theorems(common, samples, out),
        Command::Evaluate { common, generated, method, epsilon, features } => {
            cmd_evaluate(common, &generated, &method, epsilon, features, out)
        }
        Command::Account { common, epsilon, delta, q, steps, noise, ledger_out } => {
            cmd_account(common, epsilon, delta, q, steps, noise, ledger_out, out)
        }
    }
}

fn resolve_out_dir(out: &Path) -> dpdiff_core::error::Result<PathBuf> {
    let dir = if out.is_relative() {
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(out),
            None => out.to_path_buf(),
        }
    } else {
        out.to_path_buf()
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_resolved_json(dir: &Path, value: serde_json::Value) -> CResult {
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| Error::RejectedConfig(format!("resolved config serialize error: {e}")))?;
    std::fs::write(dir.join("resolved_config.json"), text + "\n")?;
    Ok(())
}

fn write_labels_csv(path: &Path, labels: &[u8]) -> CResult {
    let mut text = String::from("index,label\n");
    for (i, l) in labels.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_labels_csv(path: &Path) -> dpdiff_core::error::Result<Vec<u8>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "index,label" {
                return Err(Error::Malformed(format!("unexpected labels header '{line}'")));
            }
            continue;
        }
        let label = line
            .rsplit(',')
            .next()
            .and_then(|v| v.parse::<u8>().ok())
            .ok_or_else(|| Error::Malformed(format!("bad labels row '{line}'")))?;
        labels.push(label);
    }
    Ok(labels)
}

fn write_image_outputs(dir: &Path, stem: &str, images: &[Tensor<f64>], labels: &[u8]) -> CResult {
    for (i, img) in images.iter().enumerate() {
        tio::write_pgm_file(&dir.join(format!("{stem}_{i:04}.pgm")), img)?;
    }
    let batch = tio::stack_images(images)?;
    tio::write_tensor_file(&dir.join("images.dpt"), &batch)?;
    write_labels_csv(&dir.join("labels.csv"), labels)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_synthetic<W: Write>(
    common: CommonArgs,
    kind: &str,
    p: f64,
    n: usize,
    size: usize,
    classes: usize,
    disks: Option<usize>,
    out: &mut W,
) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let (images, labels): (Vec<Tensor<f64>>, Vec<u8>) = match kind {
        "dead-leaves" => {
            let budget = disks.map(DiskBudget::Count).unwrap_or(DiskBudget::FullCoverage);
            let params = DeadLeavesParams::new(size, size, budget)?;
            let data = dead_leaves_dataset::<f64>(&params, n, classes, common.seed)?;
            data.into_iter().unzip()
        }
        "salt-pepper" => {
            let params = SaltPepperParams::new(size, size, p)?;
            let data = salt_pepper_dataset::<f64>(&params, n, classes, common.seed)?;
            data.into_iter().unzip()
        }
        other => {
            return Err(Error::RejectedConfig(format!(
                "unknown synthetic kind '{other}' (dead-leaves | salt-pepper)"
            )))
        }
    };
    write_image_outputs(&dir, "synthetic", &images, &labels)?;
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "gen-synthetic",
            "kind": kind, "p": p, "n": n, "size": size,
            "classes": classes, "disks": disks, "seed": common.seed,
        }),
    )?;
    writeln!(out, "generated kind={kind} n={n} size={size} out={}", dir.display())?;
    Ok(())
}

fn cmd_thresholds<W: Write>(common: CommonArgs, curve_out: Option<PathBuf>, out: &mut W) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let curve = CurveTable::<f64>::default_edm();
    let coarse = stages::coarse_thresholds(&curve)?;
    let (c1, c2) = stages::DEFAULT_CLEANING_TAU;
    let a1 = alpha_bar_of_sigma(c1.exp())?;
    let a2 = alpha_bar_of_sigma(c2.exp())?;

    let curve_path = curve_out.unwrap_or_else(|| dir.join("curve.csv"));
    let mut file = std::fs::File::create(&curve_path)?;
    curve.write_csv(&mut file)?;

    writeln!(
        out,
        "cleaning tau1={c1} tau2={c2} alpha_bar_tau1={a1:.5} alpha_bar_tau2={a2:.5}"
    )?;
    if coarse.tau1_clamped || coarse.tau2_clamped {
        writeln!(
            out,
            "warning: coarse elbow detection at ln_sigma={:.3} strayed from the defaults; using published values",
            coarse.elbow_ln_sigma
        )?;
    }
    writeln!(out, "coarse tau1={} tau2={}", coarse.tau1, coarse.tau2)?;
    writeln!(out, "curve written to {}", curve_path.display())?;
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "thresholds",
            "curve": curve_path.display().to_string(),
            "cleaning": [c1, c2],
            "coarse": [coarse.tau1, coarse.tau2],
        }),
    )?;
    Ok(())
}

/// Builtin train/test splits come from disjoint seeds.
fn builtin_split(cfg: &ExperimentConfig) -> dpdiff_core::error::Result<(Vec<(Tensor<f64>, u8)>, Vec<(Tensor<f64>, u8)>)> {
    let train = toy_bars::<f64>(cfg.n_per_class, cfg.image_size, cfg.seed.wrapping_add(1))?;
    let test = toy_bars::<f64>(
        (cfg.n_per_class / 2).max(2),
        cfg.image_size,
        cfg.seed.wrapping_add(0x7e57),
    )?;
    Ok((train, test))
}

fn load_private_data(
    cfg: &ExperimentConfig,
) -> dpdiff_core::error::Result<(Vec<(Tensor<f64>, u8)>, Vec<(Tensor<f64>, u8)>)> {
    match &cfg.dataset {
        DatasetSpec::Builtin(_) => builtin_split(cfg),
        DatasetSpec::Idx { idx } => {
            let ds = idx::load_idx(&idx.images, &idx.labels)?;
            if ds.rows != cfg.image_size || ds.cols != cfg.image_size {
                return Err(Error::RejectedConfig(format!(
                    "dataset images are {}x{}, config says {}",
                    ds.rows, ds.cols, cfg.image_size
                )));
            }
            let items: Vec<(Tensor<f64>, u8)> =
                ds.images.into_iter().zip(ds.labels).collect();
            let split = items.len() * 4 / 5;
            let (train, test) = items.split_at(split.max(1));
            Ok((train.to_vec(), test.to_vec()))
        }
    }
}

fn make_synthetic_data(cfg: &ExperimentConfig) -> dpdiff_core::error::Result<Vec<(Tensor<f64>, u8)>> {
    let classes = cfg.num_classes.max(1);
    match cfg.synthetic.kind {
        SyntheticKind::DeadLeaves => {
            let params =
                DeadLeavesParams::new(cfg.image_size, cfg.image_size, DiskBudget::FullCoverage)?;
            dead_leaves_dataset(&params, cfg.synthetic.n, classes, cfg.seed.wrapping_add(0x5e_ed))
        }
        SyntheticKind::SaltPepper => {
            let params = SaltPepperParams::new(cfg.image_size, cfg.image_size, cfg.synthetic.p)?;
            salt_pepper_dataset(&params, cfg.synthetic.n, classes, cfg.seed.wrapping_add(0x5e_ed))
        }
    }
}

fn cmd_train<W: Write>(common: CommonArgs, out: &mut W) -> CResult {
    let config_path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::RejectedConfig("train needs --config".into()))?;
    let mut cfg = ExperimentConfig::from_path(config_path)?;
    // Flags override config keys.
    if common.seed != 0 {
        cfg.seed = common.seed;
    }
    if common.out != Path::new("out") {
        cfg.out_dir = common.out.clone();
    }
    let dir = resolve_out_dir(&cfg.out_dir)?;
    cfg.write_resolved(&dir.join("resolved_config.json"))?;

    let (train_items, _test_items) = load_private_data(&cfg)?;
    let private = CountingSource::new(train_items)?;
    let synthetic = CountingSource::new(make_synthetic_data(&cfg)?)?;

    let settings = cfg.train_settings()?;
    let run_spec = TrainRun { settings, synthetic: &synthetic, private: &private };
    let outcome = train_staged(&run_spec)?;

    checkpoint::save_file(&dir.join("checkpoint.ckpt"), &outcome.params, None)?;
    let mut metrics_file = std::fs::File::create(dir.join("metrics.csv"))?;
    write_metrics_csv(&mut metrics_file, &outcome.metrics)?;
    let mut ledger_file = std::fs::File::create(dir.join("ledger.csv"))?;
    outcome.ledger.write_csv(&mut ledger_file, cfg.delta)?;

    let eps = outcome.ledger.epsilon(cfg.delta)?;
    writeln!(
        out,
        "trained method={} phase1_steps={} phase2_steps={} noise_multiplier={:.6} epsilon={:.6} private_reads_phase1={} synthetic_reads_phase2={} out={}",
        cfg.method.as_str(),
        outcome.phase1_steps,
        outcome.phase2_steps,
        outcome.noise_multiplier,
        eps,
        outcome.phase1_private_reads,
        outcome.phase2_synthetic_reads,
        dir.display()
    )?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> dpdiff_core::error::Result<DenoiserParams<f64>> {
    Ok(checkpoint::load_file::<f64>(path)?.0)
}

fn sample_labels(params: &DenoiserParams<f64>, n: usize, class: Option<usize>) -> Vec<Option<usize>> {
    let classes = params.cfg().num_classes;
    (0..n)
        .map(|i| match (classes, class) {
            (0, _) => None,
            (_, Some(c)) => Some(c),
            (k, None) => Some(i % k),
        })
        .collect()
}

fn cmd_sample<W: Write>(
    common: CommonArgs,
    checkpoint_path: &Path,
    n: usize,
    steps: usize,
    class: Option<usize>,
    out: &mut W,
) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let params = load_checkpoint(checkpoint_path)?;
    let grid = SamplerGrid::<f64>::edm_default(steps.max(2));
    let labels = sample_labels(&params, n, class);
    let mut rng = SeedSplitter::new(common.seed).stream(STREAM_SAMPLER);
    let images = ddim_sample_labeled(&params, &grid, &labels, &mut rng)?;
    let label_bytes: Vec<u8> = labels.iter().map(|c| c.unwrap_or(0) as u8).collect();
    write_image_outputs(&dir, "sample", &images, &label_bytes)?;
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "sample",
            "checkpoint": checkpoint_path.display().to_string(),
            "n": n, "steps": steps, "class": class, "seed": common.seed,
        }),
    )?;
    writeln!(out, "sampled n={n} steps={steps} out={}", dir.display())?;
    Ok(())
}

fn cmd_stage_switch<W: Write>(
    common: CommonArgs,
    context_path: &Path,
    other_path: &Path,
    band: (f64, f64),
    n: usize,
    steps: usize,
    out: &mut W,
) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let context = load_checkpoint(context_path)?;
    let other = load_checkpoint(other_path)?;
    let grid = SamplerGrid::<f64>::edm_default(steps.max(2));
    let labels = sample_labels(&context, n, None);
    let mut rng = SeedSplitter::new(common.seed).stream(STREAM_SAMPLER);
    let images = stage_switch_sample(&context, &other, band, &grid, &labels, &mut rng)?;
    let label_bytes: Vec<u8> = labels.iter().map(|c| c.unwrap_or(0) as u8).collect();
    write_image_outputs(&dir, "switch", &images, &label_bytes)?;
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "stage-switch",
            "context": context_path.display().to_string(),
            "other": other_path.display().to_string(),
            "band": [band.0, band.1], "n": n, "steps": steps, "seed": common.seed,
        }),
    )?;
    writeln!(
        out,
        "stage-switch sampled n={n} band=({},{}] out={}",
        band.0,
        band.1,
        dir.display()
    )?;
    Ok(())
}

fn cmd_clean_test<W: Write>(
    common: CommonArgs,
    checkpoint_path: &Path,
    tau: f64,
    n: usize,
    steps: usize,
    out: &mut W,
) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let params = load_checkpoint(checkpoint_path)?;
    let size = match params.cfg().image_shape.as_slice() {
        [1, h, w] if h == w => *h,
        other => {
            return Err(Error::RejectedConfig(format!(
                "clean-test expects square single-channel models, got {other:?}"
            )))
        }
    };
    let test = toy_bars::<f64>(n.div_ceil(TOY_NUM_CLASSES).max(1), size, common.seed ^ 0xc1ea)?;
    let grid = SamplerGrid::<f64>::edm_default(steps.max(2));
    let mut rng = SeedSplitter::new(common.seed).stream(STREAM_SAMPLER);
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut labels = Vec::new();
    let mut total_err = 0.0;
    for (img, label) in test.iter().take(n) {
        let class = (params.cfg().num_classes > 0).then_some(*label as usize);
        let cleaned = forward_then_clean(&params, img, tau, &grid, class, &mut rng)?;
        total_err += cleaned
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        inputs.push(img.clone());
        outputs.push(cleaned);
        labels.push(*label);
    }
    let count = inputs.len();
    let dim = inputs[0].len();
    let mse = total_err / (count * dim) as f64;
    let sigma = tau.exp();
    let noise_energy = sigma * sigma / (1.0 + sigma * sigma);

    write_image_outputs(&dir, "cleaned", &outputs, &labels)?;
    tio::write_tensor_file(&dir.join("inputs.dpt"), &tio::stack_images(&inputs)?)?;
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "clean-test",
            "checkpoint": checkpoint_path.display().to_string(),
            "tau": tau, "n": n, "steps": steps, "seed": common.seed,
        }),
    )?;
    writeln!(
        out,
        "clean-test tau={tau} mse={mse:.6} noise_energy_per_pixel={noise_energy:.6} out={}",
        dir.display()
    )?;
    Ok(())
}

fn cmd_verify_theorems<W: Write>(common: CommonArgs, samples: usize, out: &mut W) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let size = 16usize;
    let dim = size * size;
    let splitter = SeedSplitter::new(common.seed);

    // Sampleable toy distributions: real-looking bars vs salt-and-pepper.
    let bars = toy_bars::<f64>(64, size, common.seed.wrapping_add(3))?;
    let sp = SaltPepperParams::mnist_mean(size, size);
    let bars_draw = {
        let bars = bars.clone();
        move |rng: &mut ChaCha12Rng| bars[rng.random_range(0..bars.len())].0.clone()
    };
    let sp_draw = move |rng: &mut ChaCha12Rng| {
        dpdiff_core::synthgen::salt_pepper::<f64>(&sp, rng.random::<u64>()).expect("valid params")
    };

    // Coarse-stage bound, shared-noise coupling.
    let schedule = dpdiff_core::diffusion::DdpmSchedule::<f64>::default_linear();
    let trial = TheoremTrial {
        x0: &bars_draw,
        y0: &sp_draw,
        dim,
        samples,
        coupling: Coupling::SharedNoise,
    };
    let mut rng1 = splitter.stream("coarse-bound");
    let nu = 0.5;
    let gamma = 0.05;
    let report1 = verify_coarse_convergence(&trial, &schedule, nu, gamma, &mut rng1)?;
    let mut csv = String::from("n,exceedance\n");
    for (n, p) in &report1.exceedance {
        csv.push_str(&format!("{n},{p}\n"));
    }
    std::fs::write(dir.join("coarse_bound_exceedance.csv"), csv)?;
    writeln!(
        out,
        "coarse-bound n_star={} nu={nu} gamma={gamma} mean_pair_distance={:.4}",
        report1.n_star, report1.mean_pair_distance
    )?;

    // Distributional reading: energy distance between independent marginals
    // at the terminal step.
    let m_energy = 512.min(samples);
    let mut rng_e = splitter.stream("coarse-bound-energy");
    let t_total = schedule.len();
    let forward = |x0: &Tensor<f64>, rng: &mut ChaCha12Rng| {
        let eta = Tensor::new(
            x0.shape().to_vec(),
            (0..x0.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
        .unwrap();
        dpdiff_core::diffusion::ddpm_forward(x0, t_total, &schedule, &eta).unwrap()
    };
    let xs: Vec<Tensor<f64>> = (0..m_energy)
        .map(|_| {
            let x0 = bars_draw(&mut rng_e);
            forward(&x0, &mut rng_e)
        })
        .collect();
    let ys: Vec<Tensor<f64>> = (0..m_energy)
        .map(|_| {
            let y0 = sp_draw(&mut rng_e);
            forward(&y0, &mut rng_e)
        })
        .collect();
    let energy = dpdiff_core::theorems::energy_distance(&xs, &ys)?;
    writeln!(out, "coarse-bound terminal_energy_distance={energy:.6}")?;

    // Cleaning-stage bound, independent noise.
    let trial2 = TheoremTrial {
        x0: &bars_draw,
        y0: &sp_draw,
        dim,
        samples,
        coupling: Coupling::IndependentNoise,
    };
    let mut rng2 = splitter.stream("cleaning-bound");
    let alpha_grid = [0.999, 0.9997, 0.99997];
    let report2 = verify_cleaning_bound(&trial2, &alpha_grid, 2.0, &mut rng2)?;
    let mut file = std::fs::File::create(dir.join("bound_report.csv"))?;
    report2.write_csv(&mut file)?;
    for row in &report2.rows {
        writeln!(
            out,
            "cleaning-bound alpha_bar={} empirical_p={:.6} gamma_bound={} status={}",
            row.alpha_bar,
            row.empirical_p,
            row.gamma_bound.map(|g| format!("{g:.6}")).unwrap_or_else(|| "n/a".into()),
            row.status.as_str()
        )?;
    }
    let pass = report2.all_valid_points_pass();
    writeln!(out, "cleaning-bound pass={pass}")?;
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "verify-theorems",
            "samples": samples, "seed": common.seed,
            "nu_coarse": nu, "gamma_coarse": gamma,
            "alpha_grid": alpha_grid, "nu_cleaning": 2.0,
        }),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Error::Numerical("cleaning-stage bound violated at a valid grid point".into()))
    }
}

fn cmd_evaluate<W: Write>(
    common: CommonArgs,
    generated_dir: &Path,
    method: &str,
    epsilon: f64,
    features: usize,
    out: &mut W,
) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    let (train_items, test_items) = load_private_data(&cfg)?;

    let batch = tio::read_tensor_file::<f64>(&generated_dir.join("images.dpt"))?;
    let gen_images = tio::unstack_images(&batch)?;
    let gen_labels = read_labels_csv(&generated_dir.join("labels.csv"))?;
    if gen_images.len() != gen_labels.len() {
        return Err(Error::Malformed("generated images/labels count mismatch".into()));
    }
    let generated: Vec<(Tensor<f64>, u8)> =
        gen_images.clone().into_iter().zip(gen_labels).collect();

    let real_train: Vec<Tensor<f64>> = train_items.iter().map(|(t, _)| t.clone()).collect();
    let features = features.min(real_train.len().saturating_sub(1)).max(1);
    let extractor = FeatureExtractor::fit(&real_train, features)?;
    let ffd = frechet_feature_distance(&extractor, &real_train, &gen_images)?;

    let cas_settings = CasSettings::default();
    let logreg = cas(
        &generated,
        &test_items,
        ClassifierKind::LogisticRegression,
        &cas_settings,
        cfg.seed,
    )?;
    let mlp = cas(&generated, &test_items, ClassifierKind::WideMlp, &cas_settings, cfg.seed)?;

    let row = MetricsReportRow {
        method: method.to_string(),
        epsilon,
        seed: common.seed,
        frechet_feature_distance: ffd,
        cas_logreg: logreg.accuracy_pct,
        cas_mlp: mlp.accuracy_pct,
    };
    let mut file = std::fs::File::create(dir.join("metrics_report.csv"))?;
    dpdiff_core::evaluation::write_metrics_report_csv(&mut file, &[row])?;
    for warn in [&logreg.warning, &mlp.warning].into_iter().flatten() {
        writeln!(out, "warning: {warn}")?;
    }
    writeln!(
        out,
        "evaluated method={method} ffd={ffd:.6} cas_logreg={:.2} cas_mlp={:.2} out={}",
        logreg.accuracy_pct,
        mlp.accuracy_pct,
        dir.display()
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_account<W: Write>(
    common: CommonArgs,
    epsilon: f64,
    delta: f64,
    q: f64,
    steps: usize,
    noise: Option<f64>,
    ledger_out: Option<PathBuf>,
    out: &mut W,
) -> CResult {
    let dir = resolve_out_dir(&common.out)?;
    let sigma = match noise {
        Some(s) => s,
        None => accountant::calibrate_noise(epsilon, delta, q, steps)?,
    };
    let ledger = accountant::rdp_account(q, sigma, steps, accountant::default_order_grid())?;
    let achieved = ledger.epsilon(delta)?;
    if let Some(path) = ledger_out {
        let full = if path.is_relative() { dir.join(path) } else { path };
        let mut file = std::fs::File::create(&full)?;
        ledger.write_csv(&mut file, delta)?;
    }
    write_resolved_json(
        &dir,
        serde_json::json!({
            "subcommand": "account",
            "epsilon": epsilon, "delta": delta, "q": q, "steps": steps,
            "noise": noise, "sigma_noise": sigma, "achieved_epsilon": achieved,
        }),
    )?;
    writeln!(out, "sigma_noise={sigma:.6} epsilon={achieved:.6}")?;
    Ok(())
}
