//! `degenlab <command> --config <file> [--out <dir>] [--seed <n>]`
//!
//! Exit status: 0 success, 1 invalid configuration, 2 precondition violation
//! reported by the library, 3 a report-level assertion failed.

mod commands;
mod config;
mod json;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::Parser;
use serde_json::json;

use config::{CommandName, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "degenlab", version, about = "Batch experiments for weighted DB operators")]
struct Cli {
    command: CommandName,
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config and DEGENLAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    AssertionFailed(String),
}

pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn status_code(status: &str) -> u8 {
    match status {
        "ok" => 0,
        "invalid-config" => 1,
        "precondition" => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = SystemTime::now();
    let clock = Instant::now();

    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("invalid config: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None if cli.command == CommandName::Suite => "{}".to_owned(),
        None => {
            eprintln!("invalid config: --config <file> is required for `{}`", cli.command.as_str());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text, cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.common.seed = seed;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("DEGENLAB_OUT").map(PathBuf::from))
        .or_else(|| cfg.common.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let (status, detail, artifacts) = match commands::run(&cfg) {
        Ok((Status::Ok, artifacts)) => ("ok", None, artifacts),
        Ok((Status::AssertionFailed(why), artifacts)) => ("assertion-failed", Some(why), artifacts),
        Err(e) if e.is_precondition() => ("precondition", Some(e.to_string()), Vec::new()),
        Err(e) => ("invalid-config", Some(e.to_string()), Vec::new()),
    };
    if let Some(d) = &detail {
        eprintln!("{}: {d}", status);
    }

    let mut outputs = Vec::new();
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create {}: {e}", out_dir.display());
        return ExitCode::from(1);
    }
    for a in &artifacts {
        let path = out_dir.join(&a.name);
        if let Err(e) = std::fs::write(&path, &a.contents) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
        outputs.push(path.display().to_string());
    }
    let manifest = json!({
        "config": cfg.raw,
        "command": cfg.command.as_str(),
        "seed": cfg.common.seed,
        "started": humantime::format_rfc3339_seconds(started).to_string(),
        "elapsed_s": clock.elapsed().as_secs_f64(),
        "outputs": outputs,
        "status": status,
        "detail": detail,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let path: &Path = &out_dir.join("manifest.json");
    if let Err(e) = std::fs::write(path, json::to_string(&manifest)) {
        eprintln!("cannot write {}: {e}", path.display());
        return ExitCode::from(1);
    }
    for o in &outputs {
        println!("{o}");
    }
    ExitCode::from(status_code(status))
}
