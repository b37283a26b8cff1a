//! `boardball` command line: headless agent experiments, interactive
//! sessions over WebSocket, log analysis and aggregate reports.

pub mod analyze;
pub mod report;
pub mod serve;
pub mod simulate;
pub mod svg;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boardball_core::SimParams;

/// Bad arguments, configs or paths: exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Problems with the data being processed: exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "boardball", version, about = "Board and ball balancing: simulate, serve, analyze, report")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the block schedule with scripted agents and write block logs.
    Simulate(simulate::SimulateArgs),
    /// Host interactive sessions over WebSocket.
    Serve(serve::ServeArgs),
    /// Compute per-trial, per-segment, strategy and dyad tables from logs.
    Analyze(analyze::AnalyzeArgs),
    /// Aggregate tables (and optional SVG plots) from `analyze` outputs.
    Report(report::ReportArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate::run(&args).map(|_| ()),
        Command::Serve(args) => serve::run(&args),
        Command::Analyze(args) => analyze::run(&args).map(|_| ()),
        Command::Report(args) => report::run(&args).map(|_| ()),
    }
}

/// Maps an error to the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    if err.downcast_ref::<UsageError>().is_some() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

pub fn load_params(path: Option<&Path>) -> anyhow::Result<SimParams> {
    match path {
        None => Ok(SimParams::default()),
        Some(p) => SimParams::load(p).map_err(|e| usage(format!("{e}"))),
    }
}

/// Writes a file, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    use anyhow::Context;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
