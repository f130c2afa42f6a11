use clap::Parser;
use duct_channel_cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("ductsim: {e}");
        std::process::exit(e.exit_code());
    }
}
