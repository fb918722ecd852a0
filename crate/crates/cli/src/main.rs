use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use recmix_core::harness::{
    diagnose, evaluate, loss_gradient_checks, run_experiment_suite, suite_csv, train, TrainConfig,
};
use recmix_core::{Checkpoint, Corpus, CorpusConfig};

#[derive(Parser)]
#[command(name = "recmix", version, about = "Cross-domain image-to-recipe retrieval with recipe mixup")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bilingual corpus.
    Gen {
        /// Corpus configuration (JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Training configuration (JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss log (CSV). Overrides `log` from the config.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Image-to-recipe retrieval on the target test pairs.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 500)]
        q: usize,
        #[arg(long, default_value_t = 10)]
        t: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Domain-gap distances and a 2-D projection of the embeddings.
    Diag {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Projection coordinates (CSV).
        #[arg(long)]
        projection: Option<PathBuf>,
    },
    /// Compare analytic and numeric gradients of every loss.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Train and evaluate every comparison variant.
    Suite {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        q: usize,
        #[arg(long, default_value_t = 10)]
        t: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, out } => {
            let config: CorpusConfig = read_json(config.as_deref())?;
            let corpus = Corpus::generate(&config)?;
            corpus.save(&out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} records to {}", corpus.records().len(), out.display());
        }
        Command::Train {
            corpus,
            config,
            out,
            log,
        } => {
            let config: TrainConfig = read_json(config.as_deref())?;
            let corpus = load_corpus(&corpus)?;
            let outcome = train(&config, &corpus)?;
            outcome
                .checkpoint
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(log) = log.or(config.log) {
                fs::write(&log, outcome.log_csv()).with_context(|| format!("writing {}", log.display()))?;
            }
            let last = outcome.log.last().map_or(f64::NAN, |e| e.total);
            eprintln!(
                "trained {} steps, final epoch loss {last:.6}, checkpoint {}",
                outcome.counters.steps,
                out.display()
            );
        }
        Command::Eval {
            ckpt,
            corpus,
            q,
            t,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
            let corpus = load_corpus(&corpus)?;
            let report = evaluate(&ck.params, &corpus, q, t, seed)?;
            emit(out.as_deref(), &report.to_csv())?;
        }
        Command::Diag {
            ckpt,
            corpus,
            n,
            seed,
            projection,
        } => {
            let ck = Checkpoint::load(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
            let corpus = load_corpus(&corpus)?;
            let report = diagnose(&ck.params, &corpus, n, seed)?;
            if let Some(p) = projection {
                fs::write(&p, report.projection_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            emit(None, &report.summary_csv())?;
        }
        Command::Gradcheck {
            points,
            seed,
            epsilon,
            tolerance,
        } => {
            let checks = loss_gradient_checks(points, seed, epsilon)?;
            let mut text = String::from("loss,points,rejected,max_relative_error,pass\n");
            let mut failed = Vec::new();
            for c in &checks {
                let pass = c.max_relative_error < tolerance;
                if !pass {
                    failed.push(c.loss);
                }
                text.push_str(&format!(
                    "{},{},{},{:e},{}\n",
                    c.loss, c.points, c.rejected, c.max_relative_error, pass
                ));
            }
            emit(None, &text)?;
            if !failed.is_empty() {
                bail!("gradient check failed for {}", failed.join(", "));
            }
        }
        Command::Suite {
            corpus,
            config,
            q,
            t,
            seed,
            out,
        } => {
            let config: TrainConfig = read_json(config.as_deref())?;
            let corpus = load_corpus(&corpus)?;
            let rows = run_experiment_suite(&corpus, &config, q, t, seed, |row| {
                eprintln!("{:<12} MedR {:.2}", row.variant, row.report.medr());
            })?;
            emit(out.as_deref(), &suite_csv(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
