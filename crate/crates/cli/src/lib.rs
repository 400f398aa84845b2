//! Command-line entry points and the HTTP authoring service.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod service;

use std::ffi::OsString;

use clap::{CommandFactory, Parser};

use args::{Cli, Command, GalleryCommand};
use commands::Ctx;
use config::{Paths, RunConfig};
pub use error::{CliError, CliResult};

fn init_logging(json: bool) {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    let b = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    // Repeated calls (tests) keep the first subscriber.
    let _ = if json { b.json().try_init() } else { b.try_init() };
}

/// Runs one command line and returns the process exit code: 0 on success,
/// 1 on usage errors, 2 on data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.log_json);
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let paths = Paths::new(cli.data_dir.clone());
    let mut cfg = RunConfig::load(cli.config.as_deref().map(|p| paths.resolve(p)).as_deref())?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    let mut ctx = Ctx { cfg, paths };
    match &cli.command {
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Ingest(a) => commands::ingest(&mut ctx, a),
        Command::Phases(a) => commands::phases(&mut ctx, a),
        Command::Gallery { action } => match action {
            GalleryCommand::Build(a) => commands::gallery_build(&mut ctx, a),
            GalleryCommand::Query(a) => commands::gallery_query(&mut ctx, a),
        },
        Command::Train(a) => commands::train(&mut ctx, a),
        Command::Rollout(a) => commands::rollout_cmd(&mut ctx, a),
        Command::Eval(a) => commands::eval(&mut ctx, a),
        Command::Serve(a) => commands::serve(&mut ctx, a),
    }
}
