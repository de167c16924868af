use std::io::Write;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use gplab::cli::args::Cli;
use gplab::cli::commands::{run, Output};
use gplab::cli::config::merge_config_args;
use gplab::ErrorClass;

fn exit_code(class: ErrorClass) -> ExitCode {
    match class {
        ErrorClass::Argument => ExitCode::from(2),
        ErrorClass::Data => ExitCode::from(3),
        ErrorClass::Internal => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let command = Cli::command();
    let argv: Vec<_> = std::env::args_os().collect();
    let (argv, overrides) = match merge_config_args(&command, argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(e.class());
        }
    };
    let cli = match command.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let text = match run(cli.command, overrides) {
        Ok(Output::Json(v)) => serde_json::to_string_pretty(&v).expect("JSON values serialize") + "\n",
        Ok(Output::Text(t)) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(e.class());
        }
    };
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    ExitCode::SUCCESS
}
