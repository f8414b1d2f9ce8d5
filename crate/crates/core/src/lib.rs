pub mod bc;
pub mod config;
pub mod distributions;
pub mod driver;
pub mod envs;
pub mod error;
pub mod gating;
pub mod nn;
pub mod q_estimation;
pub mod replay;
pub mod sac;

pub use error::{Error, Result};
