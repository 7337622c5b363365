use clap::Parser;

use impact_core::cli::{configure_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(&cli));
    match result {
        Ok(out) => {
            for (k, v) in &out.summary {
                println!("{k}: {v}");
            }
        }
        Err(e) => {
            eprintln!("impact-pricer {}: {e}", cli.command.name());
            std::process::exit(e.exit_code());
        }
    }
}
