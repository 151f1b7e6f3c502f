use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zener_core::assembly::Scheme;
use zener_core::cli_io::{cmd_convergence, cmd_inspect, cmd_run, with_threads, CliError, Overrides, RunConfig};

/// Mixed finite element solver for waves in elastic/viscoelastic composites.
#[derive(Parser, Debug)]
#[command(name = "zener", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the time loop and write field dumps and the energy series.
    Run(Common),
    /// Convergence study on the manufactured solution.
    Convergence(Common),
    /// Print dof counts and the mesh-dependent constants.
    Inspect(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Cg,
    Dg,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Polynomial order k (1, 2 or 3).
    #[arg(long)]
    order: Option<usize>,
    /// Refinement levels of a convergence study.
    #[arg(long)]
    levels: Option<usize>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Fixed DG penalty parameter.
    #[arg(long)]
    penalty: Option<f64>,
    /// Worker threads; 1 gives reproducible output.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let cwd = std::env::current_dir().map_err(|e| CliError::Config(e.to_string()))?;
        let o = Overrides {
            scheme: self.scheme.map(|s| match s {
                SchemeArg::Cg => Scheme::Cg,
                SchemeArg::Dg => Scheme::Dg,
            }),
            order: self.order,
            levels: self.levels,
            dt: self.dt,
            penalty: self.penalty,
            out: self.out.as_ref().map(|o| cwd.join(o)),
        };
        base.with_overrides(&o)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (Command::Run(c) | Command::Convergence(c) | Command::Inspect(c)) = &cli.command;
    let cfg = c.config()?;
    let threads = c.threads;
    with_threads(threads, move || {
        let mut out = std::io::stdout();
        let mut err = std::io::stderr();
        match cli.command {
            Command::Run(_) => cmd_run(&cfg, &mut out, &mut err).map(drop),
            Command::Convergence(_) => cmd_convergence(&cfg, threads > 1, &mut out).map(drop),
            Command::Inspect(_) => cmd_inspect(&cfg, &mut out).map(drop),
        }
    })?
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zener: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
