pub mod dataset;
pub mod dem;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mlp;
pub mod ode;

pub use error::{Error, Result};
