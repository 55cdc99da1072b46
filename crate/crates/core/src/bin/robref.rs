use clap::Parser;
use ref_core::cli::{exit_code, run, Cli};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&args);
    if let Err(e) = run(&cli, &args) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
