mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command, Common};
use manifest::{resolve, Job, RunManifest, MANIFEST_FILE};

fn split(command: Command) -> (Job, Common) {
    match command {
        Command::Simulate(i) => (Job::Simulate(i.args), i.common),
        Command::FitPathloss(i) => (Job::FitPathloss(i.args), i.common),
        Command::Select(i) => (Job::Select(i.args), i.common),
        Command::Run(i) => (Job::Run(i.args), i.common),
        Command::Eval(i) => (Job::Eval(i.args), i.common),
        Command::LocateNodes(i) => (Job::LocateNodes(i.args), i.common),
    }
}

/// Loads a manifest for replay. Besides `--out`, nothing may be given on
/// the command line: the manifest is the whole run.
fn replay(path: &std::path::Path, name: &str, sub: &clap::ArgMatches, common: &Common) -> Result<RunManifest> {
    let cli = Cli::command();
    let command = cli.find_subcommand(name).expect("parsed subcommand exists");
    let explicit: Vec<String> = command
        .get_arguments()
        .map(|a| a.get_id().as_str().to_string())
        .filter(|id| id != "manifest" && id != "out" && sub.value_source(id) == Some(ValueSource::CommandLine))
        .collect();
    if !explicit.is_empty() {
        bail!("--manifest cannot be combined with --{}", explicit.join(", --").replace('_', "-"));
    }
    let mut m: RunManifest = rti::io::read_json(path)?;
    if m.job.name() != name {
        bail!("manifest records `{}`, not `{name}`", m.job.name());
    }
    if m.tool != manifest::tool_version() {
        log::warn!("manifest written by {}, replaying with {}", m.tool, manifest::tool_version());
    }
    if let Some(out) = &common.out {
        m.out = out.clone();
    }
    Ok(m)
}

fn main_inner() -> Result<String> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let (job, common) = split(cli.command);
    let manifest = match &common.manifest {
        Some(path) => replay(path, name, sub, &common)?,
        None => resolve(job, &common)?,
    };
    let summary = commands::execute(&manifest)?;
    rti::io::write_json(&manifest.out.join(MANIFEST_FILE), &manifest)?;
    let config = serde_json::to_string(&manifest.config)?;
    Ok(format!("seed {}\nconfig {config}\n{summary}", manifest.seed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner() {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
