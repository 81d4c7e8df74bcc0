use clap::{Parser, Subcommand};
use delam_cli::app::{execute, Command as AppCommand};

/// Quasistatic delamination simulator: Kelvin-Voigt body with unilateral
/// adhesive contact, semi-implicit two-minimization time stepping, and
/// residual-gated vanishing-viscosity refinement.
#[derive(Parser)]
#[command(name = "delam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single simulation at fixed viscosity and time step.
    Run(CommonArgs),
    /// Full-factorial (chi, tau) residual-norm sweep.
    Sweep(CommonArgs),
    /// Joint viscosity/time-step refinement under the L1 residual gate.
    Adaptive(CommonArgs),
    /// Closed-form slider histories and rupture data.
    Oracle(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the TOML configuration file.
    #[arg(long)]
    config: String,
    /// Dotted-path overrides, e.g. --override numerics.tau=1e-3
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Command::Run(a) => (AppCommand::Run, a),
        Command::Sweep(a) => (AppCommand::Sweep, a),
        Command::Adaptive(a) => (AppCommand::Adaptive, a),
        Command::Oracle(a) => (AppCommand::Oracle, a),
    };
    if let Err(e) = execute(command, &args.config, &args.overrides) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
