use std::io::Write;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use agsim_cli::{cmd_report, cmd_run, cmd_serve, cmd_validate, print_endpoints, Cli, CliError, Command};
use agsim_core::tasks::TABLE_FILE;
use agsim_rpc::EndpointConfig;
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(args) => {
            let (dir, artifacts) = cmd_run(&args)?;
            if let Some(table) = artifacts.text(TABLE_FILE) {
                print!("{table}");
            }
            println!("artifacts written to {}", dir.display());
        }
        Command::Report(args) => print!("{}", cmd_report(&args.dir)?),
        Command::Validate(args) => println!("{}", cmd_validate(&args.config)?),
        Command::Serve(args) => {
            let endpoints = EndpointConfig::from_env()?;
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
                .expect("signal handler installs once");
            let ticks = cmd_serve(&args, endpoints, &stop, |server| print_endpoints(server, std::io::stdout()))?;
            // stdout may already be closed by whoever read the endpoint lines
            let _ = writeln!(std::io::stdout(), "stopped after {ticks} ticks");
        }
    }
    Ok(())
}
