//! Command-line experiment runner: parameter counts, training, evaluation,
//! sweeps, gradient checks, negative mining and data generation.

pub mod commands;
pub mod config;
pub mod count;
pub mod failure;
pub mod gradcheck;
pub mod setup;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{eval_cmd, gen_data_cmd, mine_cmd, sweep_cmd, train_cmd, w, SweepAxis};
use crate::config::{load_config, parse_metrics, ExperimentConfig};
use crate::failure::Failure;
use crate::gradcheck::{grad_check_cmd, GradCheckArgs};

#[derive(Debug, Parser)]
#[command(name = "peft-forge", version, about = "Parameter-efficient tuning experiments for neural rankers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// Experiment file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides a key, e.g. `--set train.lr=3e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        load_config(self.config.as_deref(), &self.sets)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trainable parameter counts for the configured method.
    CountParams {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Uses BERT-base dimensions instead of the configured encoder.
        #[arg(long)]
        bert_base: bool,
        /// Prints every published budget label next to its computed share.
        #[arg(long)]
        paper_table: bool,
    },
    /// Trains a model and writes its report and best checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Records the gradient discrepancy every N steps.
        #[arg(long, value_name = "N")]
        probe_delta: Option<usize>,
        /// Output directory; defaults to the per-run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ranks the dev queries with a checkpoint and prints metrics.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated metrics such as `mrr@10,ndcg@10,recall@100`.
        #[arg(long)]
        metrics: Option<String>,
        /// Run file to write; defaults to `run.txt` in the per-run directory.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Trains one run per value of a hyperparameter.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `lr` or `budget_split`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compares tape gradients with finite differences for every method.
    GradCheck {
        #[arg(long, default_value_t = 8)]
        d_model: usize,
        #[arg(long, default_value_t = 2)]
        n_heads: usize,
        #[arg(long, default_value_t = 2)]
        n_layers: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Comma-separated configuration names to check.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Perturbs one analytic gradient entry per check.
        #[arg(long)]
        corrupt: bool,
    },
    /// Replaces the negatives of the training triples with the checkpoint's
    /// highest-scoring non-relevant documents.
    MineNegatives {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 7)]
        top: usize,
        /// Triples file to write; defaults to `hard_triples.tsv` in the
        /// per-run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the configured synthetic dataset as files.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs one parsed command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::CountParams { cfg, bert_base, paper_table } => {
            if paper_table {
                count::print_label_table(out)?;
                return Ok(());
            }
            let c = cfg.load()?;
            let enc = if bert_base {
                peft_forge::EncoderConfig::bert_base()
            } else {
                setup::encoder_config(&c, setup::data_vocab_size(&c)?)?
            };
            count::print_count(out, &c.tuning, &enc)
        }
        Command::Train { cfg, probe_delta, out: dir } => {
            let mut c = cfg.load()?;
            if let Some(n) = probe_delta {
                if n == 0 {
                    return Err(Failure::Usage("--probe-delta must be at least 1".into()));
                }
                c.train.probe_every = n;
            }
            let dir = dir.unwrap_or_else(|| c.run_dir());
            train_cmd(&c, &dir, out).map(|_| ())
        }
        Command::Eval { cfg, checkpoint, metrics, run: run_path } => {
            let mut c = cfg.load()?;
            if let Some(m) = metrics {
                c.metrics = parse_metrics(&m)?;
            }
            let run_path = run_path.unwrap_or_else(|| c.run_dir().join("run.txt"));
            eval_cmd(&c, &checkpoint, &run_path, out).map(|_| ())
        }
        Command::Sweep { cfg, axis, values, out: dir } => {
            let c = cfg.load()?;
            let axis: SweepAxis = axis.parse()?;
            let dir = dir.unwrap_or_else(|| c.output_dir.join(format!("sweep-{}-s{}", c.raw.hash8(), c.seed)));
            let rows = sweep_cmd(&c, axis, &values, &dir, out)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                return Err(Failure::Other(format!("{failed} of {} sweep runs failed", rows.len())));
            }
            Ok(())
        }
        Command::GradCheck { d_model, n_heads, n_layers, seeds, tol, methods, corrupt } => {
            let args = GradCheckArgs { d_model, n_heads, n_layers, seeds, tol, only: methods, corrupt };
            let lines = grad_check_cmd(&args, out)?;
            let failed: Vec<&str> = lines.iter().filter(|l| !l.passed()).map(|l| l.label.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Numerical(format!("gradient check failed for {}", failed.join(", "))))
            }
        }
        Command::MineNegatives { cfg, checkpoint, top, out: path } => {
            let c = cfg.load()?;
            let path = path.unwrap_or_else(|| c.run_dir().join("hard_triples.tsv"));
            mine_cmd(&c, &checkpoint, top, &path, out).map(|_| ())
        }
        Command::GenData { cfg, out: dir } => {
            let c = cfg.load()?;
            gen_data_cmd(&c, &dir, out)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Errors go to `err`.
pub fn main_with(args: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(cli, out).and_then(|()| out.flush().map_err(w)) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {f}");
            f.exit_code()
        }
    }
}
