mod cli;
mod commands;
mod config;
mod exit;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use cli::{Cli, Command, Common};
use commands::Outcome;
use exit::CliError;
use output::OutputDir;

/// Sizes the global thread pool from `QE_THREADS` when set.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "QE_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn without_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().filter(|(_, v)| !v.is_null()).collect()),
        other => other,
    }
}

fn execute<T, F>(name: &str, common: &Common<T>, run: F) -> Result<(), CliError>
where
    T: clap::Args + Serialize + DeserializeOwned + Default,
    F: FnOnce(&mut T, &mut OutputDir) -> Result<Outcome, CliError>,
{
    let file = match &common.config {
        Some(path) => Some(config::load_file(path, name)?),
        None => None,
    };
    let merged = config::merge(&common.args, file)?;
    let mut args = merged.args;
    let mut out = OutputDir::create(&common.out)?;
    let outcome = run(&mut args, &mut out)?;
    let mut warnings = merged.warnings;
    warnings.extend(outcome.warnings);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let resolved = serde_json::to_value(&args).map_err(|e| CliError::Config(e.to_string()))?;
    out.finish(name, without_nulls(resolved), &warnings, outcome.summary)
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let name = cli.command.name();
    match &cli.command {
        Command::Evolve(c) => execute(name, c, commands::evolve_cmd),
        Command::EvolverState(c) => execute(name, c, commands::evolver_cmd),
        Command::TrainPrep(c) => execute(name, c, commands::train_cmd),
        Command::Qft(c) => execute(name, c, commands::qft_cmd),
        Command::Metrics(c) => execute(name, c, commands::metrics_cmd),
        Command::Warmup(c) => execute(name, c, commands::warmup_cmd),
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
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qumode: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
