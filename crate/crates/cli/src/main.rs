use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use degctrl_cli::{run, Command};

#[derive(Parser)]
#[command(name = "degctrl", version, about = "Degenerate parabolic null and trajectory control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Io {
    /// Problem configuration (TOML)
    config: PathBuf,
    /// Output directory
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the hypotheses on the problem data
    Validate(Io),
    /// Uncontrolled semilinear solve from u0
    Forward(Io),
    /// Target trajectory and the transformed coefficient table
    Trajectory(Io),
    /// Carleman weight table
    Weights(Io),
    /// Empirical constant of the weighted adjoint inequality
    ProbeCarleman(Io),
    /// Empirical constant of the observability inequality
    ProbeObservability(Io),
    /// Weighted null control of the linearized equation
    ControlLinear(Io),
    /// Local bilinear control to the trajectory
    ControlNonlinear(Io),
    /// Parameter sweep of the linear control
    Sweep(Io),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, io) = match cli.command {
        Cmd::Validate(io) => (Command::Validate, io),
        Cmd::Forward(io) => (Command::Forward, io),
        Cmd::Trajectory(io) => (Command::Trajectory, io),
        Cmd::Weights(io) => (Command::Weights, io),
        Cmd::ProbeCarleman(io) => (Command::ProbeCarleman, io),
        Cmd::ProbeObservability(io) => (Command::ProbeObservability, io),
        Cmd::ControlLinear(io) => (Command::ControlLinear, io),
        Cmd::ControlNonlinear(io) => (Command::ControlNonlinear, io),
        Cmd::Sweep(io) => (Command::Sweep, io),
    };
    let text = match std::fs::read_to_string(&io.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", io.config.display());
            return ExitCode::from(4);
        }
    };
    let (code, manifest) = run(command, &text, &io.out);
    if code == 0 {
        println!("{}: ok ({} outputs in {})", manifest.command, manifest.outputs.len(), io.out.display());
    } else {
        eprintln!("{}: {}", manifest.command, manifest.status);
    }
    ExitCode::from(code as u8)
}
