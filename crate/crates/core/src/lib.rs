pub mod audit;
pub mod baselines;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod features;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nas;
pub mod pipeline;
pub mod neural;
pub mod rng;

pub use error::{Error, Result};
