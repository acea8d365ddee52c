//! Point-cloud types, density/AFP math, DEM construction, height
//! normalization and AFP-width grid binning.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::raster::{DemRaster, GridGeometry, Raster};

/// A single LiDAR return.
///
/// `z` is elevation on input and height above ground after
/// [`normalize_heights`]. `source_id` carries the generating tree id for
/// synthetic clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ground: bool,
    pub source_id: Option<u32>,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            ground: false,
            source_id: None,
        }
    }

    pub const fn ground(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            ground: true,
            source_id: None,
        }
    }

    pub const fn with_source(mut self, id: u32) -> Self {
        self.source_id = Some(id);
        self
    }
}

/// Axis-aligned horizontal extent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn of_points<'a, I: IntoIterator<Item = &'a Point>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Bounds {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in it {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// Ordered collection of returns plus the horizontal area used for density.
///
/// The area stays fixed when layers are stripped so density (and hence AFP)
/// tracks the remaining point count.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    area_m2: f64,
}

impl PointCloud {
    /// Cloud with an explicit area (e.g. a circular plot plus buffer).
    pub fn new(points: Vec<Point>, area_m2: f64) -> Result<Self> {
        if !(area_m2 > 0.0) || !area_m2.is_finite() {
            return Err(invalid(format!("area must be positive, got {area_m2}")));
        }
        Ok(Self { points, area_m2 })
    }

    /// Cloud whose area is the axis-aligned bounding box of its points.
    pub fn with_bbox_area(points: Vec<Point>) -> Result<Self> {
        let b = Bounds::of_points(&points).ok_or_else(|| invalid("empty point cloud"))?;
        let area = b.area();
        if !(area > 0.0) {
            return Err(invalid("bounding box of the cloud has zero area"));
        }
        Self::new(points, area)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn area_m2(&self) -> f64 {
        self.area_m2
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> Option<Bounds> {
        Bounds::of_points(&self.points)
    }

    /// Points at `ids`, over the same area.
    pub fn subset(&self, ids: &[usize]) -> PointCloud {
        PointCloud {
            points: ids.iter().map(|&i| self.points[i]).collect(),
            area_m2: self.area_m2,
        }
    }

    pub fn max_z(&self) -> Option<f64> {
        self.points.iter().map(|p| p.z).reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityStats {
    pub density_pt_m2: f64,
    pub afp_m: f64,
}

/// Average footprint: reciprocal square root of point density.
pub fn afp_from_density(density_pt_m2: f64) -> f64 {
    1.0 / libm::sqrt(density_pt_m2)
}

pub fn compute_density(cloud: &PointCloud) -> Result<DensityStats> {
    if cloud.is_empty() {
        return Err(invalid("cannot compute density of an empty cloud"));
    }
    let density = cloud.len() as f64 / cloud.area_m2();
    Ok(DensityStats {
        density_pt_m2: density,
        afp_m: afp_from_density(density),
    })
}

/// Ground elevation raster: per-cell mean of the ground points, then void
/// cells filled by repeated 8-neighbor means until none remain.
///
/// The raster covers `extent` when given, otherwise the bounding box of the
/// ground points.
pub fn rasterize_dem(ground_points: &[Point], cell_size: f64, extent: Option<Bounds>) -> Result<DemRaster> {
    if ground_points.is_empty() {
        return Err(invalid("DEM needs at least one ground point"));
    }
    let extent = match extent {
        Some(e) => e,
        None => Bounds::of_points(ground_points).expect("non-empty"),
    };
    let geometry = GridGeometry::covering(&extent, cell_size)?;
    let mut sums = vec![0.0f64; geometry.len()];
    let mut counts = vec![0u32; geometry.len()];
    for (i, p) in ground_points.iter().enumerate() {
        let (c, r) = geometry.cell_of(p.x, p.y).ok_or(Error::OutOfBounds {
            index: i,
            x: p.x,
            y: p.y,
        })?;
        let k = geometry.index(c, r);
        sums[k] += p.z;
        counts[k] += 1;
    }
    let mut dem = Raster::new_void(geometry);
    for k in 0..geometry.len() {
        if counts[k] > 0 {
            dem.values[k] = Some(sums[k] / counts[k] as f64);
        }
    }
    dem.fill_voids(None, |v| v.iter().sum::<f64>() / v.len() as f64);
    if dem.void_count() > 0 {
        return Err(Error::Invariant("DEM void fill left empty cells".into()));
    }
    Ok(dem)
}

/// Heights above ground for every non-ground point. Ground points are
/// dropped and negative heights clamp to zero. The area is preserved.
pub fn normalize_heights(cloud: &PointCloud, dem: &DemRaster) -> Result<PointCloud> {
    let mut out = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points().iter().enumerate() {
        if p.ground {
            continue;
        }
        let oob = Error::OutOfBounds {
            index: i,
            x: p.x,
            y: p.y,
        };
        let (c, r) = dem.geometry.cell_of(p.x, p.y).ok_or(oob.clone())?;
        let ground = dem
            .get(c, r)
            .ok_or_else(|| invalid(format!("DEM cell ({c}, {r}) under point {i} is void")))?;
        let mut q = *p;
        q.z = (p.z - ground).max(0.0);
        out.push(q);
    }
    PointCloud::new(out, cloud.area_m2())
}

/// Points of a cloud partitioned into AFP-width grid cells.
///
/// Storage is compressed by cell: `offsets[k]..offsets[k + 1]` indexes the
/// ids (and their cached coordinates) of cell `k`, ids ascending.
#[derive(Debug, Clone)]
pub struct GridIndex {
    geometry: GridGeometry,
    offsets: Vec<u32>,
    ids: Vec<u32>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
}

impl GridIndex {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cell_width(&self) -> f64 {
        self.geometry.cell_size
    }

    pub fn point_count(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    fn range(&self, k: usize) -> core::ops::Range<usize> {
        self.offsets[k] as usize..self.offsets[k + 1] as usize
    }

    /// Point ids in cell `(col, row)`.
    pub fn cell(&self, col: usize, row: usize) -> &[u32] {
        if col >= self.geometry.ncols || row >= self.geometry.nrows {
            return &[];
        }
        &self.ids[self.range(self.geometry.index(col, row))]
    }

    pub(crate) fn cell_coords(&self, k: usize) -> (&[f64], &[f64], &[f64]) {
        let r = self.range(k);
        (&self.xs[r.clone()], &self.ys[r.clone()], &self.zs[r])
    }

    pub(crate) fn cell_ids_by_index(&self, k: usize) -> &[u32] {
        &self.ids[self.range(k)]
    }

    /// Non-empty cells as `((col, row), ids)`, in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), &[u32])> + '_ {
        (0..self.geometry.len()).filter_map(move |k| {
            let ids = self.cell_ids_by_index(k);
            (!ids.is_empty()).then(|| (self.geometry.col_row(k), ids))
        })
    }

    pub(crate) fn non_empty_cell_indices(&self) -> Vec<usize> {
        (0..self.geometry.len())
            .filter(|&k| self.offsets[k + 1] > self.offsets[k])
            .collect()
    }

    pub fn non_empty_cell_count(&self) -> usize {
        (0..self.geometry.len())
            .filter(|&k| self.offsets[k + 1] > self.offsets[k])
            .count()
    }
}

/// Bins every point of `cloud` into cells of width `cell_width` anchored at
/// the min corner of the cloud's bounds.
pub fn build_grid(cloud: &PointCloud, cell_width: f64) -> Result<GridIndex> {
    if !(cell_width > 0.0) || !cell_width.is_finite() {
        return Err(invalid(format!("grid cell width must be positive, got {cell_width}")));
    }
    if cloud.len() > u32::MAX as usize {
        return Err(invalid("cloud too large for a u32-indexed grid"));
    }
    let bounds = match cloud.bounds() {
        Some(b) => b,
        None => {
            return Ok(GridIndex {
                geometry: GridGeometry {
                    origin_x: 0.0,
                    origin_y: 0.0,
                    cell_size: cell_width,
                    ncols: 0,
                    nrows: 0,
                },
                offsets: vec![0],
                ids: Vec::new(),
                xs: Vec::new(),
                ys: Vec::new(),
                zs: Vec::new(),
            })
        }
    };
    let geometry = GridGeometry::covering(&bounds, cell_width)?;
    let cell_of: Vec<u32> = cloud
        .points()
        .iter()
        .map(|p| {
            let (c, r) = geometry.cell_of(p.x, p.y).expect("point inside its own bounds");
            geometry.index(c, r) as u32
        })
        .collect();
    let mut offsets = vec![0u32; geometry.len() + 1];
    for &k in &cell_of {
        offsets[k as usize + 1] += 1;
    }
    for k in 0..geometry.len() {
        offsets[k + 1] += offsets[k];
    }
    let n = cloud.len();
    let mut cursor: Vec<u32> = offsets[..geometry.len()].to_vec();
    let mut ids = vec![0u32; n];
    let mut xs = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut zs = vec![0.0; n];
    for (i, (&k, p)) in cell_of.iter().zip(cloud.points()).enumerate() {
        let slot = cursor[k as usize] as usize;
        cursor[k as usize] += 1;
        ids[slot] = i as u32;
        xs[slot] = p.x;
        ys[slot] = p.y;
        zs[slot] = p.z;
    }
    Ok(GridIndex {
        geometry,
        offsets,
        ids,
        xs,
        ys,
        zs,
    })
}
