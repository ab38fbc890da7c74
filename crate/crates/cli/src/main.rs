use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::info;
use srland::Result;
use srland_cli::args::{Cli, Command};
use srland_cli::config::MANIFEST_FILE;
use srland_cli::{cmd_eval, execute, exit_code, Manifest, EXIT_USAGE};

fn run(cli: Cli) -> Result<()> {
    if let Command::Eval(a) = &cli.command {
        let metrics = cmd_eval(&a.pred, &a.gt)?;
        let text = serde_json::to_string(&metrics).expect("metrics always serialize");
        if let Some(path) = &a.output {
            std::fs::write(path, format!("{text}\n"))?;
        }
        println!("{text}");
        return Ok(());
    }
    let job = match &cli.command {
        Command::Replay(a) => {
            let mut job = Manifest::read(&a.manifest)?.job;
            if let Some(dir) = &a.output_dir {
                job.set_output_dir(dir.clone());
            }
            job
        }
        other => other.job()?.expect("every other command is a job"),
    };
    info!("{} -> {}", job.name(), job.output_dir().display());
    let outcome = execute(&job)?;
    for file in outcome.manifest.outputs.iter().map(String::as_str).chain([MANIFEST_FILE]) {
        info!("wrote {}", job.output_dir().join(file).display());
    }
    println!("{}", outcome.summary);
    if let Some(warning) = outcome.warning {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
