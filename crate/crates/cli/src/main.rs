mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

const THREADS_VAR: &str = "HEAVYTAIL_PH_THREADS";

/// 0 success, 2 configuration, 3 fit failure, 4 non-convergence.
fn exit_code(err: &anyhow::Error) -> u8 {
    let lib = err.chain().find_map(|c| c.downcast_ref::<heavytail_ph::Error>());
    match lib {
        Some(e) if e.is_fit_failure() => 3,
        Some(e) if e.is_convergence() => 4,
        Some(heavytail_ph::Error::Internal(_)) => 1,
        _ => 2,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| heavytail_ph::Error::InvalidParameter(format!("{THREADS_VAR}='{raw}' is not a count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// The error chain joined with ": ", skipping causes already spelled out by
/// the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Compare(a) => commands::cmd_compare(a),
        Command::Queue(a) => commands::cmd_queue(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
