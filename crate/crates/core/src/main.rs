use clap::Parser;

use fsi_core::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
