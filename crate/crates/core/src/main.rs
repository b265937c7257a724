use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sbvae::evalcli::{
    effective_dimensions, export_latents, knn_error, percent, sparsity_diagnostics, square_side,
    write_latents_csv, write_pgm_grid, LatentSource, KNN_KS,
};
use sbvae::models::{
    load_model, marginal_log_likelihood_is, sample_from_prior, save_model, toy_gradcheck_suite, ModelParams,
    ModelSpec, DEFAULT_IS_SAMPLES,
};
use sbvae::numerics::RngState;
use sbvae::stick::DEFAULT_EFFECTIVE_MASS;
use sbvae::training::{prepare_data, run, DatasetSplit, RunConfig, Splits};

#[derive(Parser)]
#[command(name = "sbvae", version, about = "Stick-breaking variational autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a run configuration; writes model.bin and metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the configured test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Importance samples per example for the marginal likelihood.
        #[arg(long, default_value_t = DEFAULT_IS_SAMPLES)]
        is_samples: usize,
        #[arg(long, value_enum, default_value_t = Source::Sampled)]
        source: Source,
    },
    /// Decode prior samples into a PGM image grid.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Restrict latent codes to the first m dimensions.
        #[arg(long)]
        active_dims: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tiles per grid row (default: about √n).
        #[arg(long)]
        grid_cols: Option<usize>,
    },
    /// Finite-difference gradient checks on toy models; exits 0 iff all pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write `label,z_1..z_K` codes for one split.
    ExportLatents {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long, value_enum, default_value_t = Source::Sampled)]
        source: Source,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Sampled,
    PosteriorMean,
}

impl From<Source> for LatentSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Sampled => LatentSource::Sampled,
            Source::PosteriorMean => LatentSource::PosteriorMean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Valid,
    Test,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Train { config, out } => train(&config, &out)?,
        Command::Eval {
            config,
            checkpoint,
            out,
            is_samples,
            source,
        } => eval(&config, &checkpoint, &out, is_samples, source.into())?,
        Command::Sample {
            checkpoint,
            out,
            n,
            active_dims,
            seed,
            grid_cols,
        } => sample(&checkpoint, &out, n, active_dims, seed, grid_cols)?,
        Command::Gradcheck { seed } => return gradcheck(seed),
        Command::ExportLatents {
            config,
            checkpoint,
            out,
            split,
            source,
        } => export(&config, &checkpoint, &out, split, source.into())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_file(path).with_context(|| format!("reading run config {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<(ModelSpec, ModelParams)> {
    load_model(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn prepare(cfg: &RunConfig, spec: &ModelSpec) -> Result<Splits> {
    if cfg.spec.input_dim() != spec.input_dim() {
        bail!(
            "checkpoint expects {} inputs but the config describes {}",
            spec.input_dim(),
            cfg.spec.input_dim()
        );
    }
    prepare_data(cfg).context("preparing data")
}

fn train(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (_, outcome) = run(&cfg).context("training")?;
    save_model(&out.join("model.bin"), &cfg.spec, &outcome.params)?;
    outcome.history.write_csv(&out.join("metrics.csv"))?;
    log::info!(
        "{} epochs, best epoch {:?}{}; wrote {}",
        outcome.epochs_run,
        outcome.best_epoch,
        if outcome.stopped_early { " (early stop)" } else { "" },
        out.display()
    );
    Ok(())
}

fn labels_of(split: &DatasetSplit, what: &str) -> Result<Vec<usize>> {
    split
        .labels
        .clone()
        .with_context(|| format!("{what} needs labels; set 'labels' in the config"))
}

fn eval(config: &Path, checkpoint: &Path, out: &Path, is_samples: usize, source: LatentSource) -> Result<()> {
    let cfg = load_config(config)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let data = prepare(&cfg, &spec)?;
    fs::create_dir_all(out)?;
    let seed = cfg.train.seed;
    let test = &data.test.images;

    if spec.classes() == 0 {
        let ll = marginal_log_likelihood_is(&spec, &params, test, &mut RngState::new(seed), is_samples)?;
        let n = ll.len() as f64;
        let mean = ll.iter().sum::<f64>() / n;
        let var = ll.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        fs::write(
            out.join("marginal_ll.csv"),
            format!("samples,mean_log_likelihood,stderr\n{is_samples},{mean},{}\n", (var / n).sqrt()),
        )?;
        log::info!("test marginal log-likelihood {mean:.3} ({is_samples} samples)");
    } else {
        log::info!("skipping marginal likelihood: not defined for semi-supervised models");
    }

    let train_labels = labels_of(&data.train, "kNN")?;
    let test_labels = labels_of(&data.test, "kNN")?;
    let tr = export_latents(&spec, &params, &data.train.images, &train_labels, source, seed)?;
    let te = export_latents(&spec, &params, test, &test_labels, source, seed.wrapping_add(1))?;
    let mut knn = String::from("k,source,error_percent\n");
    for k in KNN_KS {
        let err = knn_error(&tr, &te, k)?;
        knn.push_str(&format!("{k},{},{}\n", source.as_str(), percent(err)));
        log::info!("kNN k={k}: {}% error", percent(err));
    }
    fs::write(out.join("knn.csv"), knn)?;

    if let Some(dims) = effective_dimensions(&spec, &params, test, DEFAULT_EFFECTIVE_MASS)? {
        let mut s = String::from("row,effective_dimension\n");
        for (i, d) in dims.iter().enumerate() {
            s.push_str(&format!("{},{d}\n", i + 1));
        }
        fs::write(out.join("effective_dimension.csv"), s)?;
    }
    fs::write(out.join("sparsity.csv"), sparsity_diagnostics(&spec, &params, test)?.to_csv())?;
    log::info!("wrote evaluation CSVs to {}", out.display());
    Ok(())
}

fn sample(
    checkpoint: &Path,
    out: &Path,
    n: usize,
    active_dims: Option<usize>,
    seed: u64,
    grid_cols: Option<usize>,
) -> Result<()> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    let (spec, params) = load_checkpoint(checkpoint)?;
    let images = sample_from_prior(&spec, &params, &mut RngState::new(seed), n, active_dims)?;
    let d = spec.input_dim();
    let (h, w) = square_side(d).map_or((1, d), |s| (s, s));
    let cols = grid_cols.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
    write_pgm_grid(out, &images, h, w, cols)?;
    log::info!("wrote {n} samples to {}", out.display());
    Ok(())
}

fn gradcheck(seed: u64) -> Result<ExitCode> {
    let cases = toy_gradcheck_suite(seed)?;
    let mut ok = true;
    for c in &cases {
        println!(
            "{:<32} params {:>4}  max rel error {:.3e}  {}",
            c.name,
            c.params_checked,
            c.max_rel_error,
            if c.passed { "pass" } else { "FAIL" }
        );
        ok &= c.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn export(config: &Path, checkpoint: &Path, out: &Path, split: SplitName, source: LatentSource) -> Result<()> {
    let cfg = load_config(config)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let data = prepare(&cfg, &spec)?;
    let part = match split {
        SplitName::Train => &data.train,
        SplitName::Valid => &data.valid,
        SplitName::Test => &data.test,
    };
    let labels = labels_of(part, "export-latents")?;
    let table = export_latents(&spec, &params, &part.images, &labels, source, cfg.train.seed)?;
    write_latents_csv(&table, out)?;
    log::info!("wrote {} codes to {}", table.len(), out.display());
    Ok(())
}
