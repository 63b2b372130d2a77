//! Command-line entry point.

mod args;
mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command, ConfigFile};
use args::Merge;
use crate::error::{Error, Result};

/// Exit status for errors caused by bad input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for failures while computing.
pub const EXIT_RUNTIME: i32 = 1;

/// Parses `argv`, runs the subcommand and returns the process exit status.
pub fn run<I: IntoIterator<Item = OsString>>(argv: I) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_VALIDATION,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                eprintln!("run with --help for usage");
            }
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<i32> {
    let (config, base) = match &cli.config {
        Some(p) => (load_config(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (ConfigFile::default(), Default::default()),
    };
    let threads = cli.threads.or(config.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::W2(a) => commands::w2(a.merge(config.w2.unwrap_or_default(), &base)),
        Command::Barycenter(a) => commands::barycenter(a.merge(config.barycenter.unwrap_or_default(), &base)),
        Command::DualityCheck(a) => commands::duality_check(a.merge(config.duality_check.unwrap_or_default(), &base)),
        Command::Simulate(a) => commands::simulate(a.merge(config.simulate.unwrap_or_default(), &base)),
        Command::CompareMeans(a) => commands::compare_means(a.merge(config.compare_means.unwrap_or_default(), &base)),
        Command::FamilyInfo(a) => commands::family_info(a.merge(config.family_info.unwrap_or_default(), &base)),
    })
}
