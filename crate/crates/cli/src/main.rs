use std::process::ExitCode;

use clap::Parser;
use elastomono_cli::{commands, exit, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(err) => {
            log::error!("{err}");
            commands::write_error_record(&cli.options.out, &err);
            ExitCode::from(err.exit_code())
        }
    }
}
