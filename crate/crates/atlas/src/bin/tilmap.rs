use clap::Parser;
use tilmap_atlas::cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    run(Cli::parse())
}
