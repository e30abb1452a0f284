pub mod detection;
pub mod error;
pub mod experiments;
pub mod montecarlo;
pub mod numerics;
pub mod outage;
pub mod signal_model;

pub use error::{Error, Result};
