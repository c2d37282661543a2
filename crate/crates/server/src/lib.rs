//! Command-line pipeline and HTTP search service over the `codesearch`
//! library.

pub mod cli;
pub mod config;
pub mod http;
pub mod manifest;
pub mod service;
