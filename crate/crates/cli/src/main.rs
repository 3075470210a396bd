use std::process::ExitCode;

use clap::Parser;
use phnet_cli::{exit, init_threads, run, Cli, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::VALIDATION } else { exit::SUCCESS });
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(Outcome::Done) => ExitCode::from(exit::SUCCESS),
        Ok(Outcome::ChecksFailed) => ExitCode::from(exit::VERIFICATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { exit::VALIDATION } else { exit::RUNTIME })
        }
    }
}
