use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rfactor::patterns::Window;
use serde::Serialize;

mod commands;
mod output;
mod spec;

use output::{Format, Output};

#[derive(Debug, Parser)]
#[command(name = "rfactor", version, about = "Stationary renewal processes as finitary factors of Poisson processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum CommandKind {
    Simulate,
    Factor,
    Select,
    Regularize,
    Mark,
    Verify,
    Certify,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a stationary renewal, Markov-colored or Brownian process
    Simulate(Common),
    /// Run the coupling-from-the-past factor on Poisson input
    Factor(Common),
    /// Simple selection from a two-colored Poisson process
    Select(Common),
    /// Extract k-hit points, or run the regularization chain
    Regularize(Common),
    /// Mark renewal patterns through special-point resampling
    Mark(Common),
    /// Statistical checks of a jump law or an input pattern
    Verify(Common),
    /// Regularize, bound the hazard, factor and verify end to end
    Certify(Common),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Run specification (TOML)
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent replications
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    /// Observation window as lo:hi
    #[arg(long, default_value = "0:100", value_parser = parse_window)]
    pub window: Window,
    #[arg(long, default_value = "rfactor-out")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads; outputs do not depend on it
    #[arg(long, env = "RF_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Coding-window query points for `factor`
    #[arg(long = "query")]
    pub queries: Vec<f64>,
    /// Pattern file (CSV) used by `mark`, `regularize` and `verify`
    #[arg(long)]
    pub input: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<Window, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("upper bound: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err("need finite lo < hi".into());
    }
    Ok(Window::new(lo, hi))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: CommandKind,
    spec_sha256: &'a str,
    input_sha256: Option<String>,
    options: &'a Common,
}

fn run(cli: Cli) -> Result<bool> {
    let (kind, common) = match cli.command {
        Command::Simulate(c) => (CommandKind::Simulate, c),
        Command::Factor(c) => (CommandKind::Factor, c),
        Command::Select(c) => (CommandKind::Select, c),
        Command::Regularize(c) => (CommandKind::Regularize, c),
        Command::Mark(c) => (CommandKind::Mark, c),
        Command::Verify(c) => (CommandKind::Verify, c),
        Command::Certify(c) => (CommandKind::Certify, c),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if common.reps == 0 {
        bail!("--reps must be positive");
    }
    let loaded = spec::load(&common.spec)?;
    let out = Output::create(&common.out, common.format)?;
    let input_sha256 = match &common.input {
        Some(p) => Some(spec::file_sha256(p)?),
        None => None,
    };
    out.json(
        "manifest.json",
        &Manifest {
            tool: "rfactor",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: kind,
            spec_sha256: &loaded.sha256,
            input_sha256,
            options: &common,
        },
    )?;
    let ctx = commands::Context {
        spec: &loaded.spec,
        common: &common,
        out: &out,
    };
    match kind {
        CommandKind::Simulate => commands::simulate(&ctx),
        CommandKind::Factor => commands::factor(&ctx),
        CommandKind::Select => commands::select(&ctx),
        CommandKind::Regularize => commands::regularize(&ctx),
        CommandKind::Mark => commands::mark(&ctx),
        CommandKind::Verify => commands::verify(&ctx),
        CommandKind::Certify => commands::certify(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
