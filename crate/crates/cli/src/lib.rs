//! The `testforge` command-line front end.

pub mod app;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod target;

pub use cli::{Cli, Command};
pub use config::Config;
pub use error::{CliError, Status};

use app::App;

pub fn run(cli: &Cli) -> Result<Status, CliError> {
    if let Command::Config = cli.command {
        return Ok(commands::print_config());
    }
    if let Command::Report(args) = &cli.command {
        return commands::report(args);
    }
    let app = App::from_args(&cli.global)?;
    match &cli.command {
        Command::Generate(a) => commands::generate(&app, a),
        Command::Enhance(a) => commands::enhance(&app, a),
        Command::Validate(a) => commands::validate(&app, a),
        Command::Run(a) => commands::run(&app, a),
        Command::Enqueue(a) => commands::enqueue(&app, a),
        Command::Jobs { command } => commands::jobs(&app, command),
        Command::Worker(a) => commands::worker(&app, a, &commands::shutdown_flag()),
        Command::Probe(a) => commands::probe(&app, a),
        Command::Ablate(a) => commands::ablate(&app, a),
        Command::Report(_) | Command::Config => unreachable!(),
    }
}
