//! File formats, report writers and the command-line front end for
//! [`canopy_strata_core`].
//!
//! - [`points`], [`stems`], [`grid`]: delimited point and stem-map files
//!   and ESRI ASCII DEM grids.
//! - [`report`]: layer statistics, crown tables, per-point assignments,
//!   match reports and aggregate/comparison tables.
//! - [`manifest`]: run manifests with input and output digests.
//! - [`cli`]: the `canopy-strata` command.

pub mod cli;
pub mod error;
pub mod format;
pub mod grid;
pub mod manifest;
pub mod points;
pub mod report;
pub mod stems;

pub use canopy_strata_core as core;
pub use error::{Error, Result};
