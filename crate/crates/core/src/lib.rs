pub mod app;
pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod fixtures;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod train;
pub mod nn;
mod error;

pub use error::{Error, Result};
