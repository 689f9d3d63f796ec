pub mod config;
pub mod dcs;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod fit;
pub mod format;
pub mod quadrature;
pub mod quantum;
pub mod rng;
pub mod soc;

pub use error::{Error, Result};
