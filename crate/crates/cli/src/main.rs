use clap::Parser;
use std::process::ExitCode;

use iree_cli::{run, threads_from_env, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = threads_from_env().and_then(|threads| run(&cli, threads));
    let code = match result {
        Ok(outcome) => {
            if !cli.quiet {
                println!(
                    "{}: {} files in {}",
                    cli.command.name(),
                    outcome.manifest.files.len(),
                    outcome.out_dir.display()
                );
            }
            outcome.exit_code()
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.code
        }
    };
    ExitCode::from(code as u8)
}
