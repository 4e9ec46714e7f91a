use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use sparselab::config::{parse_config, parse_lines, ConfigError};
use sparselab::{emit, run_experiment};

/// Runs one experiment and writes its tables.
///
/// Exit status: 0 when every assertion passed, 2 on an assertion failure,
/// 1 on a usage or configuration error.
#[derive(Parser, Debug)]
#[command(name = "sparselab", version)]
struct Cli {
    /// sharpness-k | sharpness-theta | reduce-fuzz | dominate-demo | maximal-equiv | weights-report
    experiment: String,
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "grid-L", value_name = "n")]
    grid_l: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// comma-separated λ values
    #[arg(long, value_name = "v,...", allow_hyphen_values = true)]
    lambda: Option<String>,
    /// comma-separated δ values
    #[arg(long, value_name = "v,...")]
    delta: Option<String>,
    /// any other configuration key, e.g. --set trials=200
    #[arg(long = "set", value_name = "key=value")]
    set: Vec<String>,
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("{}", json!({ "error": "invalid_config", "violations": e.violations }));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let file_entries = match &cli.config {
        None => Vec::new(),
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match parse_lines(&text) {
                Ok(v) => v,
                Err(e) => return config_failure(&e),
            },
            Err(e) => {
                return config_failure(&ConfigError {
                    violations: vec![format!("config: cannot read {}: {e}", path.display())],
                })
            }
        },
    };
    let mut flags: Vec<(String, String)> = Vec::new();
    for (key, v) in [
        ("L", &cli.grid_l),
        ("seed", &cli.seed),
        ("out", &cli.out),
        ("format", &cli.format),
        ("lambda", &cli.lambda),
        ("delta", &cli.delta),
    ] {
        if let Some(v) = v {
            flags.push((key.to_string(), v.clone()));
        }
    }
    for kv in &cli.set {
        match kv.split_once('=') {
            Some((k, v)) => flags.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                return config_failure(&ConfigError {
                    violations: vec![format!("--set: expected key=value (got {kv:?})")],
                })
            }
        }
    }
    let ec = match parse_config(&file_entries, &flags, Some(&cli.experiment)) {
        Ok(ec) => ec,
        Err(e) => return config_failure(&e),
    };

    let report = match run_experiment(&ec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": "run_failed", "experiment": ec.experiment.name(), "message": e.to_string() })
            );
            return ExitCode::from(1);
        }
    };
    let written = match emit(&report, ec.format, &ec.out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": "write_failed", "path": ec.out.display().to_string(), "message": e.to_string() })
            );
            return ExitCode::from(1);
        }
    };
    for p in &written {
        println!("wrote {}", p.display());
    }
    for a in &report.assertions {
        println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<_> = report.failures().iter().map(|a| json!({ "name": a.name, "detail": a.detail })).collect();
        eprintln!("{}", json!({ "error": "assertion_failed", "experiment": report.experiment, "failures": failed }));
        ExitCode::from(2)
    }
}
