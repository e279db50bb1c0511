//! Batch front-end: parses a `RunConfig`, runs one command and writes its
//! reports. The exit status is 0 iff every gate passes.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use anl_core::energy::EnergyError;
use anl_core::eos::EosError;
use anl_core::fluid::FluidError;
use anl_core::solver::SolverError;
use anl_core::structure::StructureError;
use clap::Parser;
use thiserror::Error;

pub use config::{Command, RunConfig};
use report::{finish, Provenance, ReportWriter};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("json: {0}")]
    Json(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "anl", version, about = "Residual, identity, evolution and energy checks for the relativistic Euler reformulation")]
pub struct Args {
    /// Command to run; overrides `command` in the config.
    #[arg(value_enum)]
    pub command: Option<Command>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid as `NxNxN`.
    #[arg(long, value_parser = config::parse_grid)]
    pub grid: Option<[usize; 3]>,
    #[arg(long, value_enum)]
    pub mode: Option<config::ModeSpec>,
    /// Flip the sign of one displayed coefficient, by label.
    #[arg(long)]
    pub fault: Option<String>,
}

/// Config file plus flag overrides, validated.
pub fn resolve(args: &Args) -> Result<(Command, RunConfig), CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = args.command {
        cfg.command = Some(c);
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(g) = args.grid {
        cfg.grid.n = Some(g);
    }
    if let Some(m) = args.mode {
        cfg.grid.mode = m;
    }
    if let Some(f) = &args.fault {
        cfg.fault = Some(f.clone());
    }
    cfg.validate()?;
    let cmd = cfg.command.ok_or_else(|| CliError::Config { key: "command".into(), message: "no command given in the config or on the command line".into() })?;
    Ok((cmd, cfg))
}

/// Runs one command; `Ok(true)` iff every gate passed.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<bool, CliError> {
    let eos = cfg.eos_params()?;
    let prov = Provenance {
        grid: if cmd == Command::Convergence { format!("{:?}", cfg.convergence.sizes) } else { cfg.grid_label() },
        mode: format!("{:?}", cfg.grid.mode).to_lowercase(),
        eos: eos.tag(),
        seed: cfg.seed,
        git: report::GIT_DESCRIBE.to_string(),
    };
    let mut w = ReportWriter::new(&cfg.out, prov)?;
    let out = match cmd {
        Command::Verify => commands::verify(cfg, &mut w)?,
        Command::Identities => commands::identities(cfg, &mut w)?,
        Command::Evolve => commands::evolve_cmd(cfg, &mut w)?,
        Command::Energy => commands::energy(cfg, &mut w)?,
        Command::Convergence => commands::convergence(cfg, &mut w)?,
    };
    let mut config_echo = serde_json::to_value(cfg).map_err(|e| CliError::Json(e.to_string()))?;
    config_echo["command"] = serde_json::json!(cmd.name());
    let details = serde_json::json!({ "config": config_echo, "result": out.details });
    finish(&mut w, cmd.name(), &out.gates, details)
}

/// Caps rayon's pool from `ANL_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ANL_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config { key: "ANL_THREADS".into(), message: format!("`{v}` is not a thread count") })?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}
