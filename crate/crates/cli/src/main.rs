use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::{Failure, EXIT_USAGE};
use config::{parse_control, parse_h_list, RunConfig};

/// Structure checks, time integration and convergence studies for
/// port-Hamiltonian descriptor systems.
#[derive(Parser)]
#[command(name = "phdae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the structure conditions of a builtin or an LTI model file.
    Validate(Common),
    /// Integrate a builtin scenario and write its trajectory as CSV.
    Simulate(Common),
    /// Estimate the order of the integrator from final-time errors.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    /// circuit-uncontrolled, circuit-controlled, circuit-feedback, decay or two-circuits.
    #[arg(long)]
    scenario: Option<String>,
    /// LTI model file, or a builtin name (`circuit`, `decay`, ...). Validate only.
    #[arg(long)]
    model: Option<String>,
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// CSV destination; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    power: Option<f64>,
    /// Comma-separated step sizes, at least three.
    #[arg(long = "h-list")]
    h_list: Option<String>,
    /// Input of circuit-controlled: hold (default), verbatim or zero.
    #[arg(long)]
    control: Option<String>,
    /// Report collocation endpoints without completing the algebraic coordinates.
    #[arg(long = "raw-endpoints")]
    raw_endpoints: bool,
    #[arg(long = "newton-abs-tol")]
    newton_abs_tol: Option<f64>,
    #[arg(long = "newton-rel-tol")]
    newton_rel_tol: Option<f64>,
    #[arg(long = "newton-max-iter")]
    newton_max_iter: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let usage = |e: config::ConfigError| Failure::usage(e.0);
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(usage)?;
        }
        if let Some(s) = &self.scenario {
            cfg.set("scenario", s).map_err(usage)?;
        }
        if let Some(v) = self.stages {
            cfg.stages = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if self.t_final.is_some() {
            cfg.t_final = self.t_final;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.power {
            cfg.power = v;
        }
        if let Some(s) = &self.h_list {
            cfg.h_list = Some(parse_h_list(s).map_err(usage)?);
        }
        if let Some(s) = &self.control {
            cfg.control = Some(parse_control(s).map_err(usage)?);
        }
        cfg.raw_endpoints |= self.raw_endpoints;
        if let Some(v) = self.newton_abs_tol {
            cfg.newton.abs_tol = v;
        }
        if let Some(v) = self.newton_rel_tol {
            cfg.newton.rel_tol = v;
        }
        if let Some(v) = self.newton_max_iter {
            cfg.newton.max_iter = v;
        }
        cfg.check().map_err(usage)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = args.resolve()?;
            let source = args
                .model
                .or(args.scenario)
                .unwrap_or_else(|| "circuit".to_string());
            commands::validate(&source, &cfg)
        }
        Command::Simulate(args) => commands::simulate(&args.resolve()?),
        Command::Convergence(args) => commands::convergence(&args.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
