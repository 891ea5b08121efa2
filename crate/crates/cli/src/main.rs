use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use confdiag::data::SplitName;
use confdiag_cli::commands;

/// Confidence-aware cognitive diagnosis.
#[derive(Parser)]
#[command(name = "confdiag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a split and write per-interaction predictions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: SplitName,
        /// Predictions CSV (default: next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-concept mastery and confidence for one student.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        student: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mastery and spread for every (student, concept).
    ExportAbility {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reliability-diagram bins for a split.
    ExportReliability {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: SplitName,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config } => {
            let summary = commands::train(&config, |r| {
                eprintln!(
                    "phase {} epoch {:>3}  loss {:.4} (pred {:.4}, kl {:.4}, rl {:.4})  val acc {:.4} auc {}",
                    r.phase,
                    r.epoch,
                    r.total,
                    r.pred,
                    r.kl,
                    r.rl,
                    r.validation.acc,
                    r.validation.auc.map_or("n/a".into(), |a| format!("{a:.4}")),
                );
            })
            .with_context(|| format!("training with {}", config.display()))?;
            println!("checkpoint  {}", summary.checkpoint.display());
            println!("log         {}", summary.log.display());
            println!("config      {}", summary.resolved_config.display());
            println!("best epoch  {}", summary.best_epoch);
            print_report(&summary.validation);
        }
        Command::Eval {
            checkpoint,
            split,
            out,
        } => {
            let s = commands::eval(&checkpoint, split, out.as_deref())
                .with_context(|| format!("evaluating {}", checkpoint.display()))?;
            println!("split {split}: {} interactions", s.rows);
            print_report(&s.report);
            println!("predictions {}", s.predictions.display());
        }
        Command::Diagnose {
            checkpoint,
            student,
            out,
        } => {
            let d = commands::diagnose(&checkpoint, &student, out.as_deref())
                .with_context(|| format!("diagnosing with {}", checkpoint.display()))?;
            println!("student {} ({} model)", d.student_id, d.variant);
            println!("mastery = sigmoid(mean); sigma = posterior standard deviation; rank 1 = most confident");
            println!(
                "{:>4}  {:<16} {:>8} {:>8} {:>12} {:>12} {:>10}",
                "rank", "concept", "mastery", "sigma", "interactions", "correct_rate", "train_logs"
            );
            for r in &d.rows {
                println!(
                    "{:>4}  {:<16} {:>8.4} {:>8.4} {:>12} {:>12} {:>10}",
                    r.rank,
                    r.concept_id,
                    r.mastery,
                    r.sigma,
                    r.interactions,
                    r.correct_rate.map_or("-".into(), |o| format!("{o:.3}")),
                    r.train_logs
                );
            }
            println!("csv {}", d.csv.display());
        }
        Command::ExportAbility { checkpoint, out } => {
            let (path, rows) = commands::export_ability(&checkpoint, out.as_deref())
                .with_context(|| format!("exporting abilities from {}", checkpoint.display()))?;
            println!("{rows} rows -> {}", path.display());
        }
        Command::ExportReliability {
            checkpoint,
            split,
            bins,
            out,
        } => {
            let s = commands::export_reliability(&checkpoint, split, bins, out.as_deref())
                .with_context(|| format!("exporting reliability from {}", checkpoint.display()))?;
            println!("ECE {:.12}", s.ece);
            println!("MCE {:.12}", s.mce);
            println!("{} bins -> {}", s.bins, s.csv.display());
        }
    }
    Ok(())
}

fn print_report(r: &confdiag::metrics::MetricReport) {
    println!("ACC  {:.12}", r.acc);
    println!("RMSE {:.12}", r.rmse);
    match r.auc {
        Some(a) => println!("AUC  {a:.12}"),
        None => println!("AUC  undefined (single class)"),
    }
    println!("ECE  {:.12}", r.ece);
    println!("MCE  {:.12}", r.mce);
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .downcast_ref::<confdiag::Error>()
                .is_some_and(confdiag::Error::is_validation);
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
