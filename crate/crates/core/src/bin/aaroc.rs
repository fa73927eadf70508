use std::path::PathBuf;
use std::process::ExitCode;

use aaroc::fom::Parameter;
use aaroc::harness::{self, HarnessError};
use clap::{Parser, Subcommand};
use log::error;

/// Reduced over-collocation for parametric time-dependent PDEs.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order model at one parameter.
    Fom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a reduced model; also writes `<out>.history.csv`.
    Offline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training-set index of the first parameter.
        #[arg(long)]
        mu1_index: Option<usize>,
    },
    /// Solve a trained model; also writes `<out>.residuals.csv`.
    Online {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, evaluate on the testing set and write every report.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        mu1_index: Option<usize>,
    },
}

fn load(path: &PathBuf, mu1_index: Option<usize>) -> Result<harness::ExperimentConfig, HarnessError> {
    let mut config = harness::load_config(path)?;
    if mu1_index.is_some() {
        config.greedy.mu1_index = mu1_index;
        config.validate()?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Fom { config, mu, out } => {
            let config = load(&config, None)?;
            harness::run_fom(&config, &Parameter::scalar(mu), &out)?;
        }
        Command::Offline { config, out, mu1_index } => {
            let config = load(&config, mu1_index)?;
            let a = harness::run_offline_stage(&config, &out)?;
            println!(
                "n = {}, segments = {}, enrichment points = {}{}",
                a.model.n(),
                a.n_tpar,
                a.n_adap_total,
                if a.truncated { " (robustness tolerance not met)" } else { "" }
            );
        }
        Command::Online { artifact, mu, out } => {
            harness::online_eval(&artifact, &Parameter::scalar(mu), &out)?;
        }
        Command::Bench {
            config,
            out_dir,
            mu1_index,
        } => {
            let config = load(&config, mu1_index)?;
            let outcome = harness::run_experiment(&config, &out_dir)?;
            for r in &outcome.report.rows {
                println!(
                    "n = {:3}  delta = {:.4e}  E_n = {:.4e}  N_adap = {}  segments = {}",
                    r.n, r.delta, r.e_n, r.n_adap_total, r.n_tpar
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = std::env::var("AAROC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("AAROC_THREADS ignored: {e}");
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
