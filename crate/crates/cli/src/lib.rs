//! Command-line front end: config parsing, the build → simulate → estimate →
//! compare pipeline, and the files each step writes.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::fmt;

/// Error with the process exit code it maps to: 2 config/usage,
/// 3 numerical/precision, 4 internal invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
