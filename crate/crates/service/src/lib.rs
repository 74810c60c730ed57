//! Command line and HTTP front ends for the linkage engine.

pub mod bench;
pub mod cli;
pub mod server;
