use std::process::ExitCode;

use clap::Parser;
use vesselgen_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(m) => {
            log::info!("{}: {} outputs in {}", cli.command.name(), m.outputs.len(), cli.common.out.as_deref().unwrap_or(".".as_ref()).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
