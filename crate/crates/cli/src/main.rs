mod args;
mod commands;
mod failure;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use failure::{record_for, ErrorRecord, EXIT_USAGE};

fn emit(record: &ErrorRecord) {
    eprintln!("{}", serde_json::to_string(record).unwrap_or_default());
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            emit(&ErrorRecord {
                error: "UsageError".into(),
                message: e.kind().to_string(),
                exit_code: EXIT_USAGE,
            });
            std::process::exit(EXIT_USAGE);
        }
    };

    let common = cli.command.common();
    // configured explicitly so the process reads no environment variables
    env_logger::Builder::new()
        .filter_level(if common.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();

    let result = esg_core::par::with_threads(common.threads, || commands::execute(&cli.command));
    if let Err(err) = result {
        let record = record_for(&err);
        eprintln!("error: {err:#}");
        emit(&record);
        std::process::exit(record.exit_code);
    }
}
