//! Command line front end and HTTP service for `rapid-core`.

pub mod commands;
pub mod config;
pub mod service;
