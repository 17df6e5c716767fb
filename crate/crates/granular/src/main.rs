use clap::Parser;
use granular::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
