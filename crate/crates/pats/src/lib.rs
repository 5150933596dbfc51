//! File formats, the thread-pool driver and the command line for
//! [`pats_core`].

pub mod cli;
pub mod config;
pub mod desc;
pub mod error;
pub mod matches;
pub mod pnm;
pub mod run;
pub mod sidecar;
pub mod svg;
pub mod threads;

pub use error::{Error, Result};
