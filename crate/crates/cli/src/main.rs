//! `tesscast`: tessellate a city, build per-region demand series, train and
//! tune forecasters, and compare Voronoi against geohash partitions.
//!
//! Every subcommand reads an optional JSON experiment config; flags override
//! its fields. Exit codes: 0 success, 2 config error, 3 data error,
//! 4 runtime failure.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use tesscast::{Error, ErrorCategory};

use args::{Cli, Command};

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Runtime => 4,
    }
}

fn report_error(e: &Error) -> ExitCode {
    let category = e.category();
    let stage = match e {
        Error::Stage { stage, .. } => Some(stage.as_str()),
        _ => None,
    };
    eprintln!("error: {e}");
    let record = json!({
        "error": e.to_string(),
        "category": format!("{category:?}").to_lowercase(),
        "stage": stage,
    });
    eprintln!("{record}");
    ExitCode::from(exit_code(category))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tessellate(a) => commands::tessellate(a),
        Command::Aggregate(a) => commands::aggregate(a),
        Command::Train(a) => commands::train(a),
        Command::Tune(a) => commands::tune(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Run(a) => commands::run(a),
        Command::ExportHeatmap(a) => commands::export_heatmap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}
