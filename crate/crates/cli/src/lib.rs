//! Command-line front end for the `srland` library.

pub mod args;
pub mod commands;
pub mod config;

use srland::Error;

pub use commands::{cmd_eval, execute, Outcome};
pub use config::{preset_radius, Job, Manifest, RunConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONNECTIVITY: i32 = 4;

/// Process exit status for an error, by failure class.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Usage(_) | Error::Parameter(_) => EXIT_USAGE,
        Error::Io(_) | Error::Format(_) | Error::Shape(_) | Error::Data(_) => EXIT_IO,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Connectivity(_) => EXIT_CONNECTIVITY,
        Error::Stage { .. } => unreachable!("root() strips stage annotations"),
    }
}
