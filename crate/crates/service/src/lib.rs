//! HTTP service and command-line front end for the extraction engine.

pub mod api;
pub mod cli;
pub mod store;
