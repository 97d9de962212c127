mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.workers {
        if n == 0 {
            anyhow::bail!("--workers must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { run, out } => commands::simulate(&run, &out),
        Command::Verify { run, suite, out } => commands::verify(&run, suite, out.as_deref()),
        Command::Transport { a, b, backend, out } => commands::transport(&a, &b, backend, out.as_deref()),
        Command::Sweep { run, horizons, out } => commands::sweep(&run, &horizons, out.as_deref()),
        Command::Presets => {
            commands::presets();
            Ok(Outcome::Pass)
        }
    }
}
