use clap::Parser;
use geomeasure_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = run(&cli).unwrap_or_else(|e| {
        eprintln!("geomeasure: error: {e}");
        e.exit_code()
    });
    std::process::exit(code);
}
