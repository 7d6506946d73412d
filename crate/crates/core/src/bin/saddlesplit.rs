use clap::Parser;
use saddlesplit::cli::{run_cli, RunConfig};

fn main() {
    std::process::exit(run_cli(&RunConfig::parse()));
}
