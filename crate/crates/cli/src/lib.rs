//! Configuration schema, output writers, and command execution for the
//! `delam` binary.

pub mod app;
pub mod config;
pub mod output;
