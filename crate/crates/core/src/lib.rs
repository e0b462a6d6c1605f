#![no_std]

extern crate alloc;

pub mod arch;
pub mod autodiff;
pub mod cert;
pub mod data;
pub mod error;
pub mod layers;
pub mod linalg;
pub mod nn;
pub mod statespace;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Mat;
