//! Library side of the `ihmpc` command-line tool: scenario files, trace
//! files, and the command implementations. The binary in `main.rs` is a thin
//! argument-parsing shell over [`commands`].

pub mod commands;
pub mod scenario;
pub mod tracefile;
