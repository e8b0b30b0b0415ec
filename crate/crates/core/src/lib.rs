pub mod baseline;
pub mod config;
pub mod drs;
pub mod environment;
pub mod error;
pub mod feasible;
pub mod harness;
pub mod io;
pub mod meta;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod record;
pub mod rng;

pub use error::{Error, Result};
