use std::process::ExitCode;

use anl_cli::{init_threads, resolve, run, Args};
use clap::Parser;

fn main() -> ExitCode {
    let args = Args::parse();
    let result = init_threads().and_then(|_| resolve(&args)).and_then(|(cmd, cfg)| {
        let pass = run(cmd, &cfg)?;
        eprintln!("{}: {} (reports in {})", cmd.name(), if pass { "all gates pass" } else { "gates failed" }, cfg.out.display());
        Ok(pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
