pub mod ablation;
pub mod config;
pub mod cost_volume;
pub mod depth_estimator;
pub mod error;
pub mod geometry;
pub mod maps;
pub mod metrics;
pub mod pfm;
pub mod photometric;
pub mod pipeline;
pub mod sampling;
pub mod scene_sim;

pub use error::{Error, Result};
