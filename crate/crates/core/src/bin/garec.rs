use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use garec::checkpoint::{load_checkpoint, load_factors, save_checkpoint, save_factors, CheckpointMeta};
use garec::config::RunConfig;
use garec::data::{build_matrix, load_prepared, parse_ratings, save_prepared, split, PreparedMeta, RatingFormat, SplitSpec};
use garec::error::{GarecError, Result};
use garec::eval::{crossval, evaluate_nmf_baseline, evaluate_with};
use garec::graph::CoRatingGraph;
use garec::nmf::{factorize, NmfConfig};
use garec::train::fit_with_factors;

#[derive(Parser)]
#[command(name = "garec", version, about = "Graph-attention rating prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating log and write a train/test split directory.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "tab100k")]
        format: RatingFormat,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write `fold-K` subdirectories instead of a single holdout split.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Masked NMF on the training split.
    Factorize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the model end to end.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Precomputed factors; otherwise NMF runs on the fit portion.
        #[arg(long)]
        factors: Option<PathBuf>,
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` overrides applied after the config file.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a trained model on the test split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Score plain NMF dot products on the test split.
    BaselineNmf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        factors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// K-fold cross-validation of the full pipeline.
    Crossval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "tab100k")]
        format: RatingFormat,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, body: String) -> Result<()> {
    fs::write(path, body).map_err(|e| GarecError::io(path, e))
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            input,
            format,
            out,
            split: fraction,
            seed,
            folds,
        } => {
            let data = parse_ratings(&input, format)?;
            let specs: Vec<(PathBuf, SplitSpec)> = match folds {
                Some(k) => (0..k).map(|f| (out.join(format!("fold-{f}")), SplitSpec::fold(f, k, seed))).collect(),
                None => vec![(out.clone(), SplitSpec::holdout(fraction, seed))],
            };
            for (dir, spec) in specs {
                let (train, test) = split(&data, &spec)?;
                let meta = PreparedMeta {
                    n_users: data.n_users,
                    n_items: data.n_items,
                    split: spec.describe(),
                    seed,
                    source: input.display().to_string(),
                };
                save_prepared(&dir, &train, &test, &meta)?;
                println!("{}: {} train, {} test", dir.display(), train.len(), test.len());
            }
        }
        Command::Factorize { data, d, iters, seed, out } => {
            let (train, _, _) = load_prepared(&data)?;
            let cfg = NmfConfig {
                d,
                max_iters: iters,
                seed,
                ..NmfConfig::default()
            };
            let fp = factorize(&build_matrix(&train)?, &cfg)?;
            save_factors(&fp, seed, &out)?;
        }
        Command::Train {
            data,
            factors,
            config,
            overrides,
            out,
            report,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let (train, _, _) = load_prepared(&data)?;
            let factors = factors.map(|p| load_factors(p).map(|f| f.0)).transpose()?;
            let fitted = fit_with_factors(&train, &cfg.train, factors)?;
            let meta = CheckpointMeta {
                seed: cfg.train.seed,
                freeze_factors: cfg.train.freeze_factors,
                config_echo: cfg.echo(),
            };
            save_checkpoint(&fitted.state, &meta, &out)?;
            if let Some(path) = report {
                write(&path, fitted.report.to_jsonl())?;
            }
            let best = &fitted.report.epochs[fitted.report.best_epoch];
            println!("best epoch {} val rmse {:?}", best.epoch, best.val_rmse);
        }
        Command::Evaluate { data, model, out, threads } => {
            let (train, test, meta) = load_prepared(&data)?;
            let (state, ckpt) = load_checkpoint(&model)?;
            let mut cfg = RunConfig::default();
            cfg.apply_str(&ckpt.config_echo)?;
            let ratings = build_matrix(&train)?;
            let graph = CoRatingGraph::build(&ratings, cfg.train.cap);
            let result = if threads > 1 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| GarecError::InvalidConfig(format!("thread pool: {e}")))?
                    .install(|| evaluate_with(&state, &test, &graph, &ratings, true))?
            } else {
                evaluate_with(&state, &test, &graph, &ratings, false)?
            };
            let body = json!({
                "rmse": result.rmse,
                "mae": result.mae,
                "n_evaluated": result.n_evaluated,
                "n_cold_fallback": result.n_cold_fallback,
                "split": meta.split,
                "seed": ckpt.seed,
                "config_echo": cfg.echo_json(),
            });
            write(&out, serde_json::to_string_pretty(&body)?)?;
            println!("rmse {:.4} mae {:.4}", result.rmse, result.mae);
        }
        Command::BaselineNmf { data, factors, out } => {
            let (_, test, meta) = load_prepared(&data)?;
            let (fp, seed) = load_factors(&factors)?;
            let result = evaluate_nmf_baseline(&fp, &test)?;
            let body = json!({
                "rmse": result.rmse,
                "mae": result.mae,
                "n_evaluated": result.n_evaluated,
                "n_cold_fallback": result.n_cold_fallback,
                "split": meta.split,
                "seed": seed,
                "config_echo": { "d": fp.d().to_string(), "seed": seed.to_string() },
            });
            write(&out, serde_json::to_string_pretty(&body)?)?;
            println!("rmse {:.4} mae {:.4}", result.rmse, result.mae);
        }
        Command::Crossval {
            input,
            format,
            folds,
            config,
            overrides,
            out,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let data = parse_ratings(&input, format)?;
            let report = crossval(&data, folds, cfg.train.seed, &cfg.train, &cfg.baseline)?;
            let mut body = serde_json::to_value(&report)?;
            body["seed"] = json!(cfg.train.seed);
            body["config_echo"] = cfg.echo_json();
            write(&out, serde_json::to_string_pretty(&body)?)?;
            println!(
                "rmse {:.4} +/- {:.4} (nmf {:.4})",
                report.mean_rmse, report.std_rmse, report.nmf_mean_rmse
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
