//! Metric quantification of road damage from detector boxes, monocular depth
//! and road masks.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`raster`]: image types and classical operators.
//! - [`segment`]: damage segmentation inside a detection crop.
//! - [`geometry`]: depth unprojection, ground-plane fit, metric scale
//!   recovery and the orthographic top view.
//! - [`quantify`]: per-instance metrics and risk scores.
//! - [`autolabel`]: candidate sampling, support-set selection and
//!   nearest-neighbour label assignment.
//! - [`geomap`]: GPS interpolation and GeoJSON map pins.
//! - [`synth`]: analytic road scenes with exact ground truth.
//! - [`io`] and [`pipeline`]: file formats and the end-to-end runs.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autolabel;
pub mod error;
pub mod geomap;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod quantify;
pub mod raster;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
