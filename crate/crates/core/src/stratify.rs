//! Iterative canopy-layer stripping.
//!
//! Each pass bins the remaining cloud into an AFP-width grid and, for every
//! occupied cell, inspects the smoothed height histogram of the points in a
//! closed disc (the locale) around the cell center. With at least two
//! salient curves the cell's cut height is the midpoint of the gap between
//! the top two; otherwise the whole column joins the layer. Points at or
//! above the cut form the top layer, the rest go to the next pass. The AFP
//! is recomputed before every pass over the original area, so it grows as
//! layers are removed.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::PipelineConfig;
use crate::error::{invalid, Error, Result};
use crate::histogram::{bin_of, cell_threshold, curves_top_down, GaussianKernel, SalientCurve};
use crate::math::median_in_place;
use crate::model::{build_grid, compute_density, GridIndex, PointCloud};
use crate::raster::GridGeometry;

/// Locale radius for the default factor (6 × AFP) and floor (1.5 m).
pub fn locale_radius(afp: f64) -> f64 {
    locale_radius_with(afp, 6.0, 1.5)
}

pub fn locale_radius_with(afp: f64, factor: f64, min_radius: f64) -> f64 {
    (factor * afp).max(min_radius)
}

/// Calls `f(z)` for every point within `radius` (inclusive) of the center of
/// grid cell `k`.
fn for_each_in_locale<F: FnMut(f64)>(grid: &GridIndex, k: usize, radius: f64, mut f: F) {
    let g = grid.geometry();
    let (col, row) = g.col_row(k);
    let (cx, cy) = g.center(col, row);
    let w = g.cell_size;
    let reach = libm::ceil(radius / w) as isize;
    let r2 = radius * radius;
    let c0 = (col as isize - reach).max(0) as usize;
    let c1 = ((col as isize + reach) as usize).min(g.ncols - 1);
    let r0 = (row as isize - reach).max(0) as usize;
    let r1 = ((row as isize + reach) as usize).min(g.nrows - 1);
    for rr in r0..=r1 {
        // nearest vertical distance from the center to this row's cells
        let y_lo = g.origin_y + rr as f64 * w;
        let dy = if cy < y_lo {
            y_lo - cy
        } else if cy > y_lo + w {
            cy - y_lo - w
        } else {
            0.0
        };
        if dy * dy > r2 {
            continue;
        }
        for cc in c0..=c1 {
            let x_lo = g.origin_x + cc as f64 * w;
            let dx = if cx < x_lo {
                x_lo - cx
            } else if cx > x_lo + w {
                cx - x_lo - w
            } else {
                0.0
            };
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let (xs, ys, zs) = grid.cell_coords(g.index(cc, rr));
            for i in 0..xs.len() {
                let ddx = xs[i] - cx;
                let ddy = ys[i] - cy;
                if ddx * ddx + ddy * ddy <= r2 {
                    f(zs[i]);
                }
            }
        }
    }
}

/// Heights of all points within `radius` of the center of `cell`.
pub fn collect_locale(grid: &GridIndex, cell: (usize, usize), radius: f64) -> Vec<f64> {
    let g = grid.geometry();
    let mut out = Vec::new();
    if cell.0 >= g.ncols || cell.1 >= g.nrows || !(radius > 0.0) {
        return out;
    }
    for_each_in_locale(grid, g.index(cell.0, cell.1), radius, |z| out.push(z));
    out
}

/// Cut height per occupied grid cell; `None` means take-all.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdField {
    pub geometry: GridGeometry,
    /// `(cell index, threshold)` for every occupied cell, ascending index.
    pub cells: Vec<(usize, Option<f64>)>,
}

impl ThresholdField {
    pub fn threshold_at(&self, col: usize, row: usize) -> Option<f64> {
        let k = self.geometry.index(col, row);
        self.cells
            .binary_search_by_key(&k, |&(i, _)| i)
            .ok()
            .and_then(|i| self.cells[i].1)
    }
}

struct LocaleScratch {
    counts: Vec<u32>,
    smooth: Vec<f64>,
    curvature: Vec<f64>,
    curves: Vec<SalientCurve>,
}

impl LocaleScratch {
    fn new() -> Self {
        Self {
            counts: Vec::with_capacity(256),
            smooth: Vec::with_capacity(512),
            curvature: Vec::with_capacity(512),
            curves: Vec::with_capacity(2),
        }
    }
}

struct ThresholdJob<'a> {
    grid: &'a GridIndex,
    kernel: GaussianKernel,
    radius: f64,
    config: &'a PipelineConfig,
}

impl ThresholdJob<'_> {
    fn cell(&self, k: usize, s: &mut LocaleScratch) -> Option<f64> {
        s.counts.clear();
        let mut n = 0usize;
        let bw = self.config.bin_width_m;
        let counts = &mut s.counts;
        for_each_in_locale(self.grid, k, self.radius, |z| {
            let b = bin_of(z.max(0.0), bw);
            if b >= counts.len() {
                counts.resize(b + 1, 0);
            }
            counts[b] += 1;
            n += 1;
        });
        if n < self.config.min_locale_points {
            return None;
        }
        self.kernel.smooth_counts_into(&s.counts, &mut s.smooth);
        self.kernel.curvature_into(&s.counts, &s.smooth, &mut s.curvature);
        let first_bin = -(self.kernel.half_width() as i64);
        curves_top_down(
            &s.smooth,
            &s.curvature,
            first_bin,
            self.config.min_curve_mass,
            2,
            &mut s.curves,
        );
        cell_threshold(&s.curves, bw)
    }
}

/// Per-cell cut heights for `grid` with locales of radius `radius`.
pub fn threshold_field(grid: &GridIndex, radius: f64, config: &PipelineConfig) -> Result<ThresholdField> {
    let job = ThresholdJob {
        grid,
        kernel: GaussianKernel::new(config.smooth_sigma_m, config.bin_width_m)?,
        radius,
        config,
    };
    let occupied = grid.non_empty_cell_indices();

    #[cfg(feature = "parallel")]
    let thresholds: Vec<Option<f64>> = {
        use rayon::prelude::*;
        occupied
            .par_iter()
            .with_min_len(256)
            .map_init(LocaleScratch::new, |s, &k| job.cell(k, s))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let thresholds: Vec<Option<f64>> = {
        let mut s = LocaleScratch::new();
        occupied.iter().map(|&k| job.cell(k, &mut s)).collect()
    };

    Ok(ThresholdField {
        geometry: *grid.geometry(),
        cells: occupied.into_iter().zip(thresholds).collect(),
    })
}

/// Per-cell bookkeeping for one stripping pass.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellRecord {
    pub col: usize,
    pub row: usize,
    /// Cut height; `None` when the whole column joined the layer.
    pub threshold: Option<f64>,
    /// Number of this cell's points that joined the layer.
    pub layer_points: usize,
    /// `(min z, max z)` of the layer points in this cell.
    pub z_range: Option<(f64, f64)>,
}

impl CellRecord {
    /// Starting height and thickness contributed by this cell, if it
    /// contributed points.
    pub fn start_and_thickness(&self) -> Option<(f64, f64)> {
        let (min_z, max_z) = self.z_range?;
        let start = self.threshold.unwrap_or(min_z);
        Some((start, max_z - start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSummary {
    /// Median over contributing cells of the cell's starting height (m).
    pub starting_height_m: f64,
    /// Median over contributing cells of max z minus starting height (m).
    pub thickness_m: f64,
    pub density_pt_m2: f64,
    pub point_count: usize,
}

/// Medians of per-cell starting height and thickness over the cells that
/// contributed points, plus the layer density over `area_m2`.
pub fn layer_summary(cells: &[CellRecord], point_count: usize, area_m2: f64) -> Result<LayerSummary> {
    if point_count == 0 {
        return Err(invalid("layer summary of an empty layer"));
    }
    if !(area_m2 > 0.0) {
        return Err(invalid("layer summary needs a positive area"));
    }
    let (mut starts, mut thick): (Vec<f64>, Vec<f64>) =
        cells.iter().filter_map(CellRecord::start_and_thickness).unzip();
    let starting_height_m =
        median_in_place(&mut starts).ok_or_else(|| invalid("layer has points but no contributing cells"))?;
    let thickness_m = median_in_place(&mut thick).expect("same length as starts");
    Ok(LayerSummary {
        starting_height_m,
        thickness_m,
        density_pt_m2: point_count as f64 / area_m2,
        point_count,
    })
}

/// One stripped canopy layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CanopyLayer {
    /// 1-based, top layer first.
    pub index: usize,
    /// Ids into the cloud that was stratified, ascending.
    pub point_ids: Vec<usize>,
    /// The layer's points (same area as the source cloud).
    pub points: PointCloud,
    /// Every occupied grid cell of the pass that produced this layer.
    pub cells: Vec<CellRecord>,
    /// Grid cell width (AFP) used for this pass.
    pub afp_m: f64,
    /// Locale radius used for this pass.
    pub locale_radius_m: f64,
    pub summary: LayerSummary,
    /// Set when every point lies below the ground-vegetation height.
    pub ground_vegetation: bool,
    /// Set when the cut rule stripped nothing and the pass fell back to
    /// take-all everywhere.
    pub forced_take_all: bool,
}

impl CanopyLayer {
    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().filter_map(|c| c.threshold)
    }

    /// Layer holding every point of `cloud` (used when stratification is
    /// disabled).
    pub fn whole(cloud: &PointCloud, config: &PipelineConfig) -> Result<Self> {
        let stats = compute_density(cloud)?;
        let grid = build_grid(cloud, stats.afp_m)?;
        let field = ThresholdField {
            geometry: *grid.geometry(),
            cells: grid.non_empty_cell_indices().into_iter().map(|k| (k, None)).collect(),
        };
        let radius = locale_radius_with(stats.afp_m, config.locale_factor, config.locale_min_radius_m);
        let strip = apply_field(cloud, &grid, &field, stats.afp_m, radius, config)?;
        Ok(strip.layer)
    }
}

/// Result of removing the top layer from a cloud.
#[derive(Debug, Clone)]
pub struct Strip {
    pub layer: CanopyLayer,
    pub remainder: PointCloud,
    /// Ids of the remainder's points in the input cloud, ascending.
    pub remainder_ids: Vec<usize>,
    pub field: ThresholdField,
}

fn apply_field(
    cloud: &PointCloud,
    grid: &GridIndex,
    field: &ThresholdField,
    afp: f64,
    radius: f64,
    config: &PipelineConfig,
) -> Result<Strip> {
    let mut in_layer = vec![false; cloud.len()];
    let mut cells = Vec::with_capacity(field.cells.len());
    let mut taken = 0usize;
    for &(k, threshold) in &field.cells {
        let (col, row) = field.geometry.col_row(k);
        let ids = grid.cell_ids_by_index(k);
        let (_, _, zs) = grid.cell_coords(k);
        let mut count = 0;
        let mut range: Option<(f64, f64)> = None;
        for (&id, &z) in ids.iter().zip(zs) {
            if threshold.map_or(true, |t| z >= t) {
                in_layer[id as usize] = true;
                count += 1;
                range = Some(match range {
                    None => (z, z),
                    Some((lo, hi)) => (lo.min(z), hi.max(z)),
                });
            }
        }
        taken += count;
        cells.push(CellRecord {
            col,
            row,
            threshold,
            layer_points: count,
            z_range: range,
        });
    }
    if taken == 0 {
        return Err(Error::Invariant("stripping pass selected no points".into()));
    }
    let mut point_ids = Vec::with_capacity(taken);
    let mut remainder_ids = Vec::with_capacity(cloud.len() - taken);
    for (i, &t) in in_layer.iter().enumerate() {
        if t {
            point_ids.push(i);
        } else {
            remainder_ids.push(i);
        }
    }
    let points = cloud.subset(&point_ids);
    let summary = layer_summary(&cells, point_ids.len(), cloud.area_m2())?;
    let ground_vegetation = points.max_z().is_some_and(|z| z < config.ground_vegetation_height_m);
    Ok(Strip {
        layer: CanopyLayer {
            index: 1,
            point_ids,
            points,
            cells,
            afp_m: afp,
            locale_radius_m: radius,
            summary,
            ground_vegetation,
            forced_take_all: false,
        },
        remainder: cloud.subset(&remainder_ids),
        remainder_ids,
        field: field.clone(),
    })
}

/// Strips the top canopy layer from `cloud`.
pub fn strip_top_layer(cloud: &PointCloud, config: &PipelineConfig) -> Result<Strip> {
    let stats = compute_density(cloud)?;
    let grid = build_grid(cloud, stats.afp_m)?;
    let radius = locale_radius_with(stats.afp_m, config.locale_factor, config.locale_min_radius_m);
    let field = threshold_field(&grid, radius, config)?;

    let stripped_any = field.cells.iter().any(|&(k, t)| match t {
        None => true,
        Some(t) => grid.cell_coords(k).2.iter().any(|&z| z >= t),
    });
    if stripped_any {
        return apply_field(cloud, &grid, &field, stats.afp_m, radius, config);
    }
    // progress guarantee: nothing cleared its cut, so take every column
    let take_all = ThresholdField {
        geometry: field.geometry,
        cells: field.cells.iter().map(|&(k, _)| (k, None)).collect(),
    };
    let mut strip = apply_field(cloud, &grid, &take_all, stats.afp_m, radius, config)?;
    strip.layer.forced_take_all = true;
    strip.field = field;
    Ok(strip)
}

/// Strips layers until the cloud is empty. Layer ids refer to `cloud`.
pub fn stratify(cloud: &PointCloud, config: &PipelineConfig) -> Result<Vec<CanopyLayer>> {
    config.validate()?;
    let mut layers = Vec::new();
    let mut current = cloud.clone();
    let mut current_ids: Vec<usize> = (0..cloud.len()).collect();
    while !current.is_empty() {
        let strip = strip_top_layer(&current, config)?;
        let mut layer = strip.layer;
        layer.index = layers.len() + 1;
        for id in &mut layer.point_ids {
            *id = current_ids[*id];
        }
        current_ids = strip.remainder_ids.iter().map(|&i| current_ids[i]).collect();
        current = strip.remainder;
        layers.push(layer);
    }
    Ok(layers)
}
