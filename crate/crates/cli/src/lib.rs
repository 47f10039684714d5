//! Command-line front end and HTTP service for `legal-rag`.

pub mod cli;
pub mod config;
pub mod service;
