//! Reproducible pipeline for predicting purchase behavior from TV ad
//! exposure and viewer demographics.

pub mod data;
pub mod eval;
pub mod exposure;
pub mod features;
pub mod learners;
pub mod matrix;
pub mod targets;
pub mod runner;
pub mod stats;
pub mod synthgen;
