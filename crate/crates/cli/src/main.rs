use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use splitstep::stencil_coefficients;

mod config;
mod run;

use config::{apply_overrides, from_value, read_value, ConfigError};
use run::{Failure, EXIT_INTERNAL, EXIT_OK, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "splitstep", version, about = "Split-step solvers and Trotter error experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output` (default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the scans.
        #[arg(long)]
        threads: Option<usize>,
        /// `key=value` replacing a config entry; dotted keys reach into lists.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the centered difference weights of order `p`.
    Stencil {
        #[arg(long)]
        p: usize,
    },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn load(path: &PathBuf, overrides: &[String]) -> (Option<Value>, Result<config::RunConfig, ConfigError>) {
    let mut value = match read_value(path) {
        Ok(v) => v,
        Err(e) => return (None, Err(e)),
    };
    if let Err(e) = apply_overrides(&mut value, overrides) {
        return (Some(value), Err(e));
    }
    let parsed = from_value(value.clone()).and_then(|c| c.validate().map(|_| c));
    (Some(value), parsed)
}

fn run_command(path: PathBuf, out: Option<PathBuf>, threads: Option<usize>, overrides: Vec<String>) -> anyhow::Result<i32> {
    if let Some(k) = threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return Ok(EXIT_VALIDATION);
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let (raw, loaded) = load(&path, &overrides);
    match loaded {
        Ok(config) => {
            let out = out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
            run::run(&config, &out)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let out = out
                .or_else(|| {
                    raw.as_ref()
                        .and_then(|v| v.get("output"))
                        .and_then(Value::as_str)
                        .map(PathBuf::from)
                })
                .unwrap_or_else(|| PathBuf::from("out"));
            let failure = Failure::validation(e.to_string());
            run::write_report(&out, raw.unwrap_or(Value::Null), None, Err(&failure), 0.0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            overrides,
        } => run_command(config, out, threads, overrides),
        Command::Validate { config, overrides } => match load(&config, &overrides).1 {
            Ok(c) => {
                println!("ok: {} experiment on {} axes", c.experiment, c.d);
                Ok(EXIT_OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(EXIT_VALIDATION)
            }
        },
        Command::Stencil { p } => match stencil_coefficients(p) {
            Ok(s) => {
                println!("offset,weight");
                for (k, a) in s.iter() {
                    println!("{k},{a:?}");
                }
                Ok(EXIT_OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(EXIT_VALIDATION)
            }
        },
    };
    match result {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("internal error: {e:#}");
            exit(EXIT_INTERNAL)
        }
    }
}
