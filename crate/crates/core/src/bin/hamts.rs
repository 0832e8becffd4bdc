use std::num::NonZeroUsize;
use std::path::PathBuf;

use clap::Parser;
use hamts::cli::{execute, Command, Format, Invocation};

/// Weyl-Titchmarsh analysis of linear Hamiltonian nabla systems.
#[derive(Parser)]
#[command(name = "hamts", version)]
struct Args {
    command: Command,
    /// JSON problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long)]
    parallel: Option<NonZeroUsize>,
}

fn main() {
    let args = Args::parse();
    let code = execute(&Invocation {
        command: args.command,
        config: args.config,
        out: args.out,
        format: args.format,
        parallel: args.parallel,
    });
    std::process::exit(code);
}
