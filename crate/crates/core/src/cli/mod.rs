//! Configuration ingestion, command dispatch and report emission.

pub mod commands;
pub mod config;
pub mod report;

use std::io::Write;
use std::num::NonZeroUsize;
use std::path::PathBuf;

pub use commands::run;
pub use config::{load_config, parse_config, Format, Problem, ProblemConfig};
pub use report::{Report, Residual};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Eig,
    WeylTrace,
    Classify,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::WeylTrace => "weyl-trace",
            Command::Classify => "classify",
            Command::Verify => "verify",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::ConfigSyntax(_) | Error::Io(_) => EXIT_CONFIG,
        Error::UnstableRank { .. } => EXIT_INCONCLUSIVE,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub parallel: Option<NonZeroUsize>,
}

/// Run one command end to end and return the process exit status.
pub fn execute(inv: &Invocation) -> i32 {
    let problem = match load_config(&inv.config) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("hamts: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = inv.parallel {
        pool = pool.num_threads(n.get());
    }
    let report = match pool.build() {
        Ok(pool) => pool.install(|| run(inv.command, &problem)),
        Err(e) => {
            eprintln!("hamts: thread pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            eprintln!("hamts {}: {e}", inv.command.name());
            return exit_code(&e);
        }
    };
    let text = match inv.format.unwrap_or(problem.config.output.format) {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    let out = inv.out.clone().or_else(|| problem.config.output.path.as_ref().map(PathBuf::from));
    let written = match &out {
        Some(path) => std::fs::write(path, text.as_bytes()).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("hamts: cannot write report: {e}");
        return EXIT_NUMERICAL;
    }
    if !report.passed() {
        for r in report.residuals.iter().filter(|r| !r.pass) {
            eprintln!("hamts {}: residual {} = {:e} fails tolerance {:e}", inv.command.name(), r.name, r.value, r.tolerance);
        }
        return EXIT_NUMERICAL;
    }
    EXIT_OK
}
