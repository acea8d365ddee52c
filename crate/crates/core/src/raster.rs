//! Regular rasters with optional cells, shared by the DEM and the per-layer
//! surface models.
//!
//! Rows grow northward: row 0 is the southernmost row and the origin is the
//! lower-left corner of cell (0, 0). Cells are half-open `[lo, hi)` on both
//! axes; a coordinate sitting exactly on the global max edge folds into the
//! last row or column.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::model::Bounds;

/// Relative slack used when folding coordinates on the max edge.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridGeometry {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl GridGeometry {
    /// Smallest grid anchored at the bounds' min corner that covers them.
    pub fn covering(bounds: &Bounds, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(invalid("cell size must be positive and finite"));
        }
        let ncols = libm::ceil(bounds.width() / cell_size).max(1.0);
        let nrows = libm::ceil(bounds.height() / cell_size).max(1.0);
        if ncols * nrows > u32::MAX as f64 {
            return Err(invalid("grid would exceed 2^32 cells"));
        }
        Ok(Self {
            origin_x: bounds.min_x,
            origin_y: bounds.min_y,
            cell_size,
            ncols: ncols as usize,
            nrows: nrows as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.ncols + col
    }

    #[inline]
    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.ncols, index / self.ncols)
    }

    /// Cell center in world coordinates.
    #[inline]
    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    #[inline]
    fn axis_cell(&self, v: f64, origin: f64, n: usize) -> Option<usize> {
        let f = (v - origin) / self.cell_size;
        if !(f >= 0.0) {
            return None;
        }
        let c = libm::floor(f) as usize;
        if c < n {
            Some(c)
        } else if c == n && f <= n as f64 * (1.0 + EDGE_EPS) {
            Some(n - 1)
        } else {
            None
        }
    }

    /// `(col, row)` of the cell containing `(x, y)`, or `None` outside.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if self.is_empty() {
            return None;
        }
        Some((
            self.axis_cell(x, self.origin_x, self.ncols)?,
            self.axis_cell(y, self.origin_y, self.nrows)?,
        ))
    }

    /// Indices of the up to eight neighbors of `index`.
    pub fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (col, row) = self.col_row(index);
        let (col, row) = (col as isize, row as isize);
        (-1isize..=1)
            .flat_map(move |dr| (-1isize..=1).map(move |dc| (dc, dr)))
            .filter(|&(dc, dr)| dc != 0 || dr != 0)
            .filter_map(move |(dc, dr)| {
                let (c, r) = (col + dc, row + dr);
                if c < 0 || r < 0 || c >= self.ncols as isize || r >= self.nrows as isize {
                    None
                } else {
                    Some(self.index(c as usize, r as usize))
                }
            })
    }
}

/// Raster of optional values (void cells are `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub geometry: GridGeometry,
    pub values: Vec<Option<f64>>,
}

/// Ground elevation raster.
pub type DemRaster = Raster;
/// Per-layer maximum-height surface model.
pub type DsmRaster = Raster;

impl Raster {
    pub fn new_void(geometry: GridGeometry) -> Self {
        Self {
            values: vec![None; geometry.len()],
            geometry,
        }
    }

    pub fn filled(geometry: GridGeometry, value: f64) -> Self {
        Self {
            values: vec![Some(value); geometry.len()],
            geometry,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        if col >= self.geometry.ncols || row >= self.geometry.nrows {
            return None;
        }
        self.values[self.geometry.index(col, row)]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: Option<f64>) {
        let i = self.geometry.index(col, row);
        self.values[i] = value;
    }

    /// Value of the cell containing `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (c, r) = self.geometry.cell_of(x, y)?;
        self.get(c, r)
    }

    pub fn void_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Repeatedly fills void cells from their filled 8-neighbors until no
    /// fillable void remains. `combine` reduces the neighbor values; `mask`
    /// restricts which voids may be filled. Each pass reads a snapshot of the
    /// previous pass so the result does not depend on scan order.
    pub(crate) fn fill_voids<F>(&mut self, mask: Option<&[bool]>, combine: F) -> usize
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut pending: Vec<usize> = (0..self.values.len())
            .filter(|&i| self.values[i].is_none() && mask.map_or(true, |m| m[i]))
            .collect();
        let mut passes = 0;
        let mut neigh = Vec::with_capacity(8);
        let mut updates: Vec<(usize, f64)> = Vec::new();
        while !pending.is_empty() {
            updates.clear();
            for &i in &pending {
                neigh.clear();
                neigh.extend(self.geometry.neighbors8(i).filter_map(|j| self.values[j]));
                if !neigh.is_empty() {
                    updates.push((i, combine(&neigh)));
                }
            }
            if updates.is_empty() {
                break;
            }
            for &(i, v) in &updates {
                self.values[i] = Some(v);
            }
            pending.retain(|&i| self.values[i].is_none());
            passes += 1;
        }
        passes
    }
}
