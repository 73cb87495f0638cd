use clap::Parser;

use interpose::cli::{error_json, exit_code, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("{}", error_json(&err));
        std::process::exit(exit_code(&err));
    }
}
