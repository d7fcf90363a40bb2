pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod online;
pub mod simgen;
pub mod spectra;
pub mod wavelet;

pub use error::{Error, Result};
