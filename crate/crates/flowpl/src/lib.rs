//! File formats, run directories and the command line of flowpl.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod io;
pub mod log;
pub mod sslrun;
pub mod workdir;

pub use error::{Error, Result};
