#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod linalg;
pub mod model;
pub mod spectra;

pub use error::{Error, Result};
