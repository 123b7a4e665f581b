use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emergence_cli::config::{self, ScenarioConfig};
use emergence_cli::{emit, run, validate, Format, Scenario};

#[derive(Parser)]
#[command(name = "emergence", version, about = "Run and validate emergence scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config, run its scenario and write the outputs.
    Run { config: PathBuf },
    /// Report every violation in a config without running it.
    Validate { config: PathBuf },
    /// Print the scenario catalog.
    ListScenarios,
}

const VALIDATION_FAILURE: u8 = 1;
const RUNTIME_FAILURE: u8 = 2;

fn load_valid(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    let cfg = config::load(path).map_err(|e| {
        eprintln!("error: cannot parse {}: {e}", path.display());
        ExitCode::from(VALIDATION_FAILURE)
    })?;
    let violations = validate(&cfg);
    if violations.is_empty() {
        return Ok(cfg);
    }
    for v in &violations {
        eprintln!("invalid: {v}");
    }
    Err(ExitCode::from(VALIDATION_FAILURE))
}

fn cmd_run(path: &Path) -> ExitCode {
    let cfg = match load_valid(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RUNTIME_FAILURE);
        }
    };
    for format in [Format::Csv, Format::JsonSummary] {
        if let Err(e) = emit(&result, &cfg, format, &cfg.output.dir) {
            eprintln!("error: writing {}: {e}", cfg.output.dir.display());
            return ExitCode::from(RUNTIME_FAILURE);
        }
    }
    for (name, check) in &result.summary {
        let verdict = if check.pass { "pass" } else { "FAIL" };
        println!("{verdict} {name} = {:.6e} ({})", check.value, check.criterion);
    }
    if result.pass() {
        println!("{}: pass", result.scenario);
        ExitCode::SUCCESS
    } else {
        println!("{}: FAIL ({})", result.scenario, result.failures().join(", "));
        ExitCode::from(RUNTIME_FAILURE)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => cmd_run(&config),
        Command::Validate { config } => match load_valid(&config) {
            Ok(_) => {
                println!("valid");
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<22} {}", s.name(), s.description());
            }
            ExitCode::SUCCESS
        }
    }
}
