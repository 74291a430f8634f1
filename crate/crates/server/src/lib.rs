//! HTTP session service and command-line front end over the `relfeed` engine.

pub mod cli;
pub mod config;
mod error;
pub mod service;
pub mod store;
pub mod tabular;

pub use config::ServiceConfig;
pub use error::{Result, ServiceError};
