//! File formats, configuration, parallel evaluation and the command-line
//! driver around [`preig_core`].

pub mod checkpoint;
pub mod commands;
pub mod config;
mod error;
pub mod logs;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod table;

pub use error::{Error, Result};
