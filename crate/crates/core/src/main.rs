use clap::Parser;
use inspection_path::cli::{execute, Cli};

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::ExitCode::from(execute(Cli::parse()))
}
