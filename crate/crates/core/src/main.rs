use std::process::ExitCode;

use clap::Parser;
use flagchain::cli::{configure_threads, run, ErrorRecord, RunConfig};
use flagchain::Error;

fn main() -> ExitCode {
    let config = RunConfig::parse();
    if let Err(e) = configure_threads().and_then(|()| config.validate()) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&config) {
        Ok(report) => {
            if config.out.is_some() {
                print!("{}", report.summary());
            } else {
                eprint!("{}", report.summary());
                println!("{}", report.to_json());
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let code = if matches!(e, Error::InvalidInput { .. }) { 2 } else { 3 };
            println!("{}", serde_json::to_string_pretty(&ErrorRecord::from(&e)).expect("error serializes"));
            ExitCode::from(code)
        }
    }
}
