use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use arper_cli::{
    cmd_diagnose, cmd_report, cmd_run, cmd_weight_delta, resolve_out, RunConfig, RunStatus,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "arper",
    version,
    about = "Continual learning experiments for DA-conditioned NLG"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed, task order) in the config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output root; defaults to run.out, then $ARPER_OUT, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Run only this seed instead of run.seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forgetting curves on the pretrain task while learning the transfer task.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Elementwise |Δθ| of one parameter segment as CSV.
    WeightDelta {
        checkpoint_a: PathBuf,
        checkpoint_b: PathBuf,
        #[arg(long, default_value = "w_h")]
        segment: String,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run directories into a markdown table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = resolve_out(out.as_deref(), &cfg);
            let workers = workers.or(cfg.run.workers).unwrap_or(1);
            let outcomes = cmd_run(&cfg, &config_base(&config), &out, workers, seed)?;
            let failed = outcomes
                .iter()
                .filter(|o| matches!(o.status, RunStatus::Failed(_)))
                .count();
            println!(
                "{} runs, {} failed; summary in {}",
                outcomes.len(),
                failed,
                out.join("summary.md").display()
            );
            Ok(if failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Diagnose { config, out, seed } => {
            let cfg = RunConfig::load(&config)?;
            let out = resolve_out(out.as_deref(), &cfg);
            for p in cmd_diagnose(&cfg, &config_base(&config), &out, seed)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::WeightDelta {
            checkpoint_a,
            checkpoint_b,
            segment,
            out,
        } => {
            emit(
                &cmd_weight_delta(&checkpoint_a, &checkpoint_b, &segment)?,
                out.as_deref(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dirs, out } => {
            let report = cmd_report(&dirs)?;
            for (p, why) in &report.problems {
                eprintln!("skipped {}: {why}", p.display());
            }
            emit(&report.markdown(), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
