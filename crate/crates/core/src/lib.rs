//! Measures whether a vision-language model's attribute-based description of
//! a concept is invariant to the visual style (functional vs. decorative) in
//! which the concept's name is rendered as an image.
//!
//! The pipeline: render visual-text stimuli, gate them by identification,
//! sample, collect attribute lists, extract normalized terms, and compare
//! the per-style term distributions (TV distance, chi-squared homogeneity
//! with low-frequency merging, per-font within/across averages, top-N
//! ranking diffs).

pub mod config;
pub mod error;
pub mod extract;
pub mod modelio;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod stats;
pub mod stimulus;

#[doc(hidden)]
pub mod testkit;

pub use error::{Error, Result};
