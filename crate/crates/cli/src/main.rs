mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use config::{parse_config, Cli, Resolved, RunConfig, UsageError};

const USAGE: u8 = 2;
const SOLVER: u8 = 1;
const VALIDATION: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(USAGE),
            };
        }
    };
    let name = cli.command.name();
    let env_cache = std::env::var_os("LLBAND_CACHE_DIR").map(PathBuf::from);
    let config = match parse_config(cli, env_cache) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("llband {name}: usage error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    match run(name, config) {
        Ok(code) => code,
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<llband::error::Error>(),
                    Some(llband::error::Error::InvalidParameter(_) | llband::error::Error::NExceedsZ { .. })
                );
            if usage {
                eprintln!("llband {name}: usage error: {e:#}");
                ExitCode::from(USAGE)
            } else {
                eprintln!("llband {name}: {e:#}");
                ExitCode::from(SOLVER)
            }
        }
    }
}

fn run(name: &str, config: RunConfig) -> anyhow::Result<ExitCode> {
    let start = Instant::now();
    let cache = config.cache_dir.as_deref();
    let outcome = match config.command {
        Resolved::Kernels(a) => commands::kernels(a, cache)?,
        Resolved::Spectrum(a) => commands::spectrum(a)?,
        Resolved::Stf(a) => commands::stf(a)?,
        Resolved::Dstf(a) => commands::dstf(a, cache)?,
        Resolved::TraceSweep(a) => commands::trace_sweep(a)?,
        Resolved::Validate(a) => commands::validate(a)?,
    };
    let wall = start.elapsed().as_secs_f64();
    for w in &outcome.writer.warnings {
        eprintln!("warning: {w}");
    }
    for path in outcome.writer.commit(&config.out, name, outcome.config, wall)? {
        println!("{}", path.display());
    }
    if let Some((path, table)) = &outcome.table {
        llband::kernels::write_table(path, table)?;
        println!("{}", path.display());
    }
    Ok(if outcome.validation_failed {
        eprintln!("llband validate: at least one criterion failed");
        ExitCode::from(VALIDATION)
    } else {
        ExitCode::SUCCESS
    })
}
