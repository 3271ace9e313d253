//! File formats, parallel sweeps and the `fnl` command line on top of
//! [`fnl_core`].

pub mod cli;
pub mod config;
mod error;
pub mod io;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
