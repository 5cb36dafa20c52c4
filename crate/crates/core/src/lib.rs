//! Few-shot and cross-modal few-shot open-set generalization.

mod binio;
pub mod episodic;
mod sampling;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod splits;
pub mod trainer;

pub use error::{Error, Result};
