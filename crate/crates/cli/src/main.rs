use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use villadsen_cli::{execute, exit, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = execute(&cli);
    let text = report.to_json();
    if let Some(err) = &report.error {
        eprintln!("villadsen {}: {err}", report.command);
    }
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text + "\n") {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(exit::INPUT as u8);
            }
        }
        // a closed pipe is not worth a panic
        None => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    ExitCode::from(report.exit_code as u8)
}
