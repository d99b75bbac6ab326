use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bulksurf::config::load_config;
use bulksurf::output::write_convergence_csv;
use bulksurf::{equilibrium_json, regime_json, run_experiment, validation_json, CliError};
use bulksurf_core::diagnostics::limit_convergence_study;
use bulksurf_core::solver::ModelVariant;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bulksurf", version, about = "Bulk-surface reaction-diffusion-sorption simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration and write trajectory and final state.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Classify the time-scale regime of a configuration.
    Regimes {
        #[arg(long)]
        config: PathBuf,
    },
    /// Equilibrium of the model problem for the totals a, b and κ.
    Equilibrium {
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
    },
    /// Distance of the full model to a limit model for shrinking ε.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
        epsilons: Vec<f64>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration and print the resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_json(v: &serde_json::Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    writeln!(out, "{v}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            for w in &cfg.regime.notes {
                eprintln!("note: {w}");
            }
            let summary = run_experiment(&cfg, &out)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&summary.to_json())
        }
        Command::Regimes { config } => print_json(&regime_json(&load_config(&config)?.regime)),
        Command::Equilibrium { a, b, kappa } => print_json(&equilibrium_json(a, b, kappa)?),
        Command::Convergence { config, variant, epsilons, out } => {
            let cfg = load_config(&config)?;
            let v = ModelVariant::from_name(&variant)
                .ok_or_else(|| CliError::Usage(format!("unknown variant `{variant}`")))?;
            if epsilons.is_empty() || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(CliError::Usage(String::from("epsilons must be positive numbers")));
            }
            let rows = limit_convergence_study(&cfg.problem, &cfg.initial, v, &epsilons, cfg.t_end, &cfg.stepper)
                .map_err(CliError::Study)?;
            let res = match &out {
                Some(path) => {
                    let f = File::create(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
                    write_convergence_csv(BufWriter::new(f), &rows)
                }
                None => write_convergence_csv(io::stdout().lock(), &rows),
            };
            res.map_err(|e| CliError::Io {
                path: out.unwrap_or_else(|| "<stdout>".into()),
                source: io::Error::other(e.to_string()),
            })
        }
        Command::Validate { config } => print_json(&validation_json(&load_config(&config)?)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
