use clap::{Args, Parser, Subcommand};
use einsel::plot::{emit_plot, PlotKind};
use einsel::run::{run_command, Command};
use einsel::scenario::Scenario;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable that overrides the scenario's output directory.
const OUT_DIR_ENV: &str = "EINSEL_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "einsel",
    version,
    about = "Master equations and the predictability sieve for a particle in a scalar field"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides EINSEL_OUT_DIR and `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the bath kernels F_R and F_H.
    Kernels(RunArgs),
    /// Integrate the kernels into the Brownian-motion coefficients.
    Coeffs(RunArgs),
    /// Evolve the initial state with the selected master equation.
    Evolve(RunArgs),
    /// Secular decoherence rates between energy levels.
    Rates(RunArgs),
    /// Rank a family of initial states by the entropy they produce.
    Sieve(RunArgs),
    /// Compare the master equation with exact few-mode dynamics.
    Oracle(RunArgs),
    /// Render a CSV artifact as SVG.
    Plot {
        /// entropy_curves, offdiag_decay or coefficient_traces.
        kind: String,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the input path with an `.svg` extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn out_dir(args: &RunArgs, scenario: &Scenario) -> PathBuf {
    if let Some(dir) = &args.out {
        return dir.clone();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&scenario.output.dir),
    }
}

fn run(cmd: Command, args: &RunArgs) -> einsel::Result<()> {
    let scenario = Scenario::load(&args.config)?;
    let dir = out_dir(args, &scenario);
    let outcome = run_command(cmd, &scenario, &dir)?;
    for path in &outcome.artifacts {
        println!("{}", path.display());
    }
    Ok(())
}

fn plot(kind: &str, input: &Path, output: Option<&Path>) -> einsel::Result<()> {
    let kind: PlotKind = kind.parse()?;
    let output = output.map_or_else(|| input.with_extension("svg"), Path::to_path_buf);
    emit_plot(input, kind, &output)?;
    println!("{}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Kernels(a) => run(Command::Kernels, a),
        Cmd::Coeffs(a) => run(Command::Coeffs, a),
        Cmd::Evolve(a) => run(Command::Evolve, a),
        Cmd::Rates(a) => run(Command::Rates, a),
        Cmd::Sieve(a) => run(Command::Sieve, a),
        Cmd::Oracle(a) => run(Command::Oracle, a),
        Cmd::Plot {
            kind,
            input,
            output,
        } => plot(kind, input, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
