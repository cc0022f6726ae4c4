use clap::Parser;

use ilc2d_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((text, pass)) => {
            print!("{text}");
            if !pass {
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            std::process::exit(1);
        }
    }
}
