//! Command-line driver: scenario runs with oracle verdicts, the authority
//! service, and key management.

pub mod commands;
pub mod keyfile;
pub mod report;
pub mod service;
pub mod wire;
