//! Library side of the `dem` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod tables;
