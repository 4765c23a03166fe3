//! Command-line front end for the `pucci-core` solvers.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use clap::{Parser, Subcommand};

use commands::CommandName;
use config::{Flags, Merged};
use error::CliError;
use output::Summary;

#[derive(Debug, Parser)]
#[command(name = "pucci", version, about = "Critical exponents, radial profiles and perturbed-domain solutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical exponent of one operator, with its analytic bounds.
    Exponent(Flags),
    /// Radial Dirichlet profile on the unit ball and its non-degeneracy report.
    Radial(Flags),
    /// Solutions on perturbed balls by continuation in the amplitude or homotopy in the ellipticity.
    Perturbed(Flags),
    /// Critical exponents over a sweep of operators, dimensions and constants.
    Table(Flags),
}

pub fn run(cli: Cli) -> Result<Summary, CliError> {
    let (name, flags) = match cli.command {
        Command::Exponent(f) => (CommandName::Exponent, f),
        Command::Radial(f) => (CommandName::Radial, f),
        Command::Perturbed(f) => (CommandName::Perturbed, f),
        Command::Table(f) => (CommandName::Table, f),
    };
    commands::execute(name, &Merged::new(flags)?)
}
