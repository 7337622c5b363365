//! `impact-pricer` command line: one scenario file in, CSV tables and a
//! `manifest.json` out.

pub mod commands;
pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::PricerError;
use crate::payoff::{ExpectationEngine, Method};
use commands::CommandOutput;
use config::ScenarioConfig;
use output::{sha256_hex, EngineRecord, RunManifest};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_OVERFLOW: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "impact-pricer", version, about = "Price-impact engine for CARA market makers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Quadrature,
    Mc,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Static quotes X(q).
    Quote(CommonArgs),
    /// Replication bounds and arbitrage classification over a u-grid.
    Bounds(CommonArgs),
    /// Optimal demand over a price grid.
    Schedule(CommonArgs),
    /// Bilateral equilibrium price and quantity.
    Pepq(CommonArgs),
    /// Constraint-set raster for the two-dimensional digital claim.
    Region(CommonArgs),
    /// Gains-process simulation, wealth identity and budget checks.
    Simulate(CommonArgs),
    /// Large-position schedules.
    Asymptotics(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Quote(_) => "quote",
            Command::Bounds(_) => "bounds",
            Command::Schedule(_) => "schedule",
            Command::Pepq(_) => "pepq",
            Command::Region(_) => "region",
            Command::Simulate(_) => "simulate",
            Command::Asymptotics(_) => "asymptotics",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Quote(a)
            | Command::Bounds(a)
            | Command::Schedule(a)
            | Command::Pepq(a)
            | Command::Region(a)
            | Command::Simulate(a)
            | Command::Asymptotics(a) => a,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Pricer(PricerError),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Pricer(PricerError::Overflow { .. }) => EXIT_OVERFLOW,
            CliError::Pricer(PricerError::InvalidInput(_) | PricerError::Dimension(_)) => EXIT_CONFIG,
            CliError::Pricer(_) => EXIT_SOLVER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Pricer(e) => write!(f, "{} ({})", e, commands::error_code(e)),
        }
    }
}

impl From<PricerError> for CliError {
    fn from(e: PricerError) -> Self {
        CliError::Pricer(e)
    }
}

fn engine_from(cfg: &ScenarioConfig, args: &CommonArgs) -> Result<ExpectationEngine, CliError> {
    let mut e = cfg.engine.build().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(s) = args.seed {
        e.seed = s;
    }
    if let Some(m) = args.engine {
        e.method = match m {
            EngineArg::Quadrature => Method::Quadrature,
            EngineArg::Mc => Method::MonteCarlo,
        };
    }
    if let Some(p) = args.paths {
        e.paths = p;
    }
    if let Some(n) = args.nodes {
        e.nodes = n;
    }
    if let Some(t) = args.tol {
        e.abs_tol = t;
    }
    e.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(e)
}

/// Runs one command against an already-parsed config (no files written).
pub fn execute(command: &str, cfg: &ScenarioConfig, engine: &ExpectationEngine) -> Result<CommandOutput, CliError> {
    let out = match command {
        "quote" => commands::cmd_quote(cfg, engine),
        "bounds" => commands::cmd_bounds(cfg, engine),
        "schedule" => commands::cmd_schedule(cfg, engine),
        "pepq" => commands::cmd_pepq(cfg, engine),
        "region" => commands::cmd_region(cfg),
        "simulate" => commands::cmd_simulate(cfg, engine),
        "asymptotics" => commands::cmd_asymptotics(cfg, engine),
        other => return Err(CliError::Config(format!("unknown command {other}"))),
    }?;
    Ok(out)
}

/// Parses the config, runs the command and writes tables plus manifest into `--out`.
pub fn run(cli: &Cli) -> Result<CommandOutput, CliError> {
    let start = Instant::now();
    let args = cli.command.args();
    let bytes = fs::read(&args.config).map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let engine = engine_from(&cfg, args)?;
    let result = execute(cli.command.name(), &cfg, &engine)?;
    write_outputs(&args.out, cli.command.name(), &bytes, &engine, &result, start.elapsed().as_secs_f64())?;
    Ok(result)
}

fn write_outputs(
    dir: &Path,
    command: &str,
    config_bytes: &[u8],
    engine: &ExpectationEngine,
    result: &CommandOutput,
    wall: f64,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    for t in &result.tables {
        outputs.push(t.write(dir)?);
    }
    let mut tolerances = BTreeMap::from([("engine_abs_tol".to_string(), engine.abs_tol)]);
    tolerances.extend(result.tolerances.clone());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_sha256: sha256_hex(config_bytes),
        seeds: result.seeds.clone(),
        engine: EngineRecord {
            method: match engine.method {
                Method::Quadrature => "quadrature".into(),
                Method::MonteCarlo => "mc".into(),
            },
            nodes: engine.nodes,
            paths: engine.paths,
        },
        tolerances,
        outputs,
        summary: result.summary.clone(),
        wall_clock_seconds: wall,
    };
    manifest.write(dir)?;
    Ok(())
}

/// Sizes the global rayon pool from `IMPACT_PRICER_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("IMPACT_PRICER_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("IMPACT_PRICER_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}
