//! `telepar`: equilibrium sweeps, synthetic panels, PPML fits, causal
//! tables and diagnostics from TOML configs.
//!
//! Success prints one JSON line on stdout; failure prints one JSON line on
//! stderr and exits 2 (configuration), 3 (convergence) or 4 (data).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use telepar_core::ingest::Transform;
use telepar_core::{ErrorClass, Result};

use commands::Common;
use output::Outputs;

#[derive(Parser)]
#[command(name = "telepar", version, about = "Telehealth payment-parity equilibrium and PPML pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium shifts over a (regime, broadband) grid.
    SimulateEquilibrium(CommonArgs),
    /// Synthetic county-year panel.
    GeneratePanel(CommonArgs),
    /// PPML fit of the interaction design.
    Fit(CommonArgs),
    /// Fit plus ATT/ACRT table and diagnostics.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Broadband levels for the ATT table, e.g. 0,1,2,4,8,12.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Broadband transform and optional panel assembly.
    IngestBroadband {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = ["zscore", "log_minmax", "arcsinh"])]
        transform: Option<String>,
    },
    /// Parameter-recovery or theory-consistency Monte Carlo.
    Montecarlo(CommonArgs),
}

fn run(cmd: Command) -> Result<(&'static str, serde_json::Value, Vec<PathBuf>)> {
    let (name, args) = match &cmd {
        Command::SimulateEquilibrium(a) => ("simulate-equilibrium", a),
        Command::GeneratePanel(a) => ("generate-panel", a),
        Command::Fit(a) => ("fit", a),
        Command::Analyze { common, .. } => ("analyze", common),
        Command::IngestBroadband { common, .. } => ("ingest-broadband", common),
        Command::Montecarlo(a) => ("montecarlo", a),
    };
    let common = Common { config: &args.config, seed: args.seed, out: &args.out };
    let mut out = Outputs::new(common.out);
    let summary = match cmd {
        Command::SimulateEquilibrium(_) => commands::simulate_equilibrium(&common, &mut out)?,
        Command::GeneratePanel(_) => commands::generate_panel(&common, &mut out)?,
        Command::Fit(_) => commands::fit_panel(&common, &mut out)?,
        Command::Analyze { ref levels, .. } => commands::analyze(&common, levels.clone(), &mut out)?,
        Command::IngestBroadband { ref transform, .. } => {
            let t = transform.as_deref().map(str::parse::<Transform>).transpose()?;
            commands::ingest(&common, t, &mut out)?
        }
        Command::Montecarlo(_) => commands::montecarlo(&common, &mut out)?,
    };
    Ok((name, summary, out.written))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((command, summary, outputs)) => {
            let line = json!({ "status": "ok", "command": command, "outputs": outputs, "summary": summary });
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (class, code) = match e.class() {
                ErrorClass::Config => ("config", 2),
                ErrorClass::Convergence => ("convergence", 3),
                ErrorClass::Data => ("data", 4),
            };
            eprintln!("{}", json!({ "status": "error", "class": class, "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}
