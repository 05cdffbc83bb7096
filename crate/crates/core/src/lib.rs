//! Endemic/epidemic transition detection from daily reported cases.
//!
//! The pipeline runs [`series`] ingestion, trailing-window [`indicators`]
//! (CV, skewness, kurtosis, entropy), a four-indicator [`pca`] whose first
//! component is the early-warning score, the threshold [`detector`], and
//! piecewise endemic / Bernoulli-Verhulst fits in [`phenomodel`]. [`synth`]
//! generates series with known ground truth.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod indicators;
pub mod pca;
pub mod phenomodel;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
