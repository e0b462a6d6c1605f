//! File formats, benchmarks and the command-line front end over
//! [`lipkernel_core`].

pub mod bench;
pub mod cli;
pub mod error;
pub mod idx;
pub mod model;

pub use error::{Error, Result};
pub use lipkernel_core as core;
