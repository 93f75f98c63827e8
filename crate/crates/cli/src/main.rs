use clap::Parser;

fn main() -> anyhow::Result<()> {
    pragma_cli::run(pragma_cli::Cli::parse())
}
