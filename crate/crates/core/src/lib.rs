pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod graphon;
pub mod kernel;
pub mod net;
pub mod numerics;
pub mod prune;
pub mod spectra;

pub use error::{Error, ErrorClass, Result};
