//! Vertical stratification of airborne LiDAR forest point clouds into canopy
//! layers, per-layer tree crown segmentation, and stem-map evaluation.
//!
//! The crate is `no_std` with `alloc`. Enable `std` for `std::error::Error`
//! integration, `parallel` for rayon-backed per-cell and per-layer work, and
//! `serde` for (de)serializable configuration and report types.
//!
//! Pipeline overview:
//!
//! 1. [`model`]: density and average footprint (AFP), DEM rasterization,
//!    height normalization and AFP-width grid binning.
//! 2. [`histogram`] + [`stratify`]: per-cell locale height histograms,
//!    Gaussian smoothing, concave-run detection and the gap-midpoint
//!    threshold used to strip the top canopy layer, repeated until the cloud
//!    is empty.
//! 3. [`segment`]: a pluggable per-layer crown segmenter (marker-controlled
//!    watershed on a max-height surface model) and the crown noise filter.
//! 4. [`eval`]: pair scoring, maximum-score assignment and Re/Pr/F metrics.
//! 5. [`synth`]: seeded multi-story synthetic stands with attenuated LiDAR
//!    sampling, used as ground truth.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod histogram;
pub(crate) mod math;
pub mod model;
pub mod raster;
pub mod segment;
pub mod stratify;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use model::{Bounds, DensityStats, GridIndex, Point, PointCloud};
pub use raster::{DemRaster, DsmRaster, GridGeometry, Raster};
