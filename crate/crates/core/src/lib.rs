//! Masked-autoencoder foundation model for wireless channel state information.

mod binio;
pub mod channelgen;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod tasks;

pub use error::{Error, Result};
