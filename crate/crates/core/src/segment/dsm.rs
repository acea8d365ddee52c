//! Max-height surface model of a layer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::model::{Bounds, Point};
use crate::raster::{DsmRaster, GridGeometry, Raster};

/// Convex hull (counter-clockwise, no collinear points) by monotone chain.
pub(crate) fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // the upper chain may not pop into the lower one
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Horizontal extent `[x_min, x_max]` of the hull at height `y`, if any.
fn hull_span_at(hull: &[(f64, f64)], y: f64) -> Option<(f64, f64)> {
    match hull.len() {
        0 => return None,
        1 => return (hull[0].1 == y).then_some((hull[0].0, hull[0].0)),
        _ => {}
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (y0, y1) = (a.1.min(b.1), a.1.max(b.1));
        if y < y0 || y > y1 {
            continue;
        }
        if a.1 == b.1 {
            lo = lo.min(a.0.min(b.0));
            hi = hi.max(a.0.max(b.0));
        } else {
            let t = (y - a.1) / (b.1 - a.1);
            let x = a.0 + t * (b.0 - a.0);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Cells whose centers fall inside (or on) the convex hull of `points`.
/// Cells holding a point are always inside.
pub(crate) fn footprint_mask(geometry: &GridGeometry, points: &[Point]) -> Vec<bool> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let hull = convex_hull(&xy);
    let mut mask = vec![false; geometry.len()];
    for row in 0..geometry.nrows {
        let (_, cy) = geometry.center(0, row);
        if let Some((lo, hi)) = hull_span_at(&hull, cy) {
            for col in 0..geometry.ncols {
                let (cx, _) = geometry.center(col, row);
                if cx >= lo && cx <= hi {
                    mask[geometry.index(col, row)] = true;
                }
            }
        }
    }
    for p in points {
        if let Some((c, r)) = geometry.cell_of(p.x, p.y) {
            mask[geometry.index(c, r)] = true;
        }
    }
    mask
}

/// Surface model of a layer: per-cell max z over a grid of
/// `max(cell_size, min_cell_size)`, voids inside the layer's convex
/// footprint filled by repeated 8-neighbor max, then an optional 3x3 mean
/// over filled cells.
pub fn build_dsm(points: &[Point], cell_size: f64, min_cell_size: f64, smooth: bool) -> Result<DsmRaster> {
    if points.is_empty() {
        return Err(invalid("surface model of an empty layer"));
    }
    let cs = cell_size.max(min_cell_size);
    let bounds = Bounds::of_points(points).expect("non-empty");
    let geometry = GridGeometry::covering(&bounds, cs)?;
    let mut dsm = Raster::new_void(geometry);
    for p in points {
        let (c, r) = geometry.cell_of(p.x, p.y).expect("inside own bounds");
        let k = geometry.index(c, r);
        dsm.values[k] = Some(dsm.values[k].map_or(p.z, |v| v.max(p.z)));
    }
    let mask = footprint_mask(&geometry, points);
    dsm.fill_voids(Some(&mask), |v| v.iter().copied().fold(f64::MIN, f64::max));
    if smooth {
        dsm = mean3x3(&dsm);
    }
    Ok(dsm)
}

/// 3x3 mean over filled cells; void cells stay void.
pub(crate) fn mean3x3(r: &Raster) -> Raster {
    let g = r.geometry;
    let mut out = Raster::new_void(g);
    for k in 0..g.len() {
        if let Some(v) = r.values[k] {
            let mut sum = v;
            let mut n = 1.0;
            for j in g.neighbors8(k) {
                if let Some(w) = r.values[j] {
                    sum += w;
                    n += 1.0;
                }
            }
            out.values[k] = Some(sum / n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_rule_per_cell() {
        let d = build_dsm(&[Point::new(0.1, 0.1, 20.0)], 0.5, 0.0, false).unwrap();
        assert_eq!(d.values, vec![Some(20.0)]);
        let d = build_dsm(
            &[Point::new(0.1, 0.1, 18.0), Point::new(0.2, 0.2, 20.0)],
            0.5,
            0.0,
            false,
        )
        .unwrap();
        assert_eq!(d.values, vec![Some(20.0)]);
    }

    #[test]
    fn interior_void_takes_neighbor_max() {
        // 3x3 ring of cells around an empty center, heights 10 and 12
        let mut pts = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                if (r, c) == (1, 1) {
                    continue;
                }
                let z = if c == 2 { 12.0 } else { 10.0 };
                pts.push(Point::new(c as f64 + 0.5, r as f64 + 0.5, z));
            }
        }
        pts.push(Point::new(0.0, 0.0, 10.0));
        pts.push(Point::new(3.0, 3.0, 12.0));
        let d = build_dsm(&pts, 1.0, 0.0, false).unwrap();
        assert_eq!(d.get(1, 1), Some(12.0));
    }

    #[test]
    fn voids_outside_the_hull_stay_void() {
        // points along the diagonal: the hull is a sliver
        let pts = [
            Point::new(0.0, 0.0, 5.0),
            Point::new(4.0, 4.0, 5.0),
            Point::new(4.0, 0.0, 5.0),
        ];
        let d = build_dsm(&pts, 1.0, 0.0, false).unwrap();
        assert!(d.get(0, 3).is_none());
        assert!(d.get(3, 0).is_some());
    }

    #[test]
    fn cell_size_lower_bound() {
        let pts = [Point::new(0.0, 0.0, 5.0), Point::new(4.0, 4.0, 5.0)];
        let d = build_dsm(&pts, 0.5, 2.0, false).unwrap();
        assert_eq!(d.geometry.cell_size, 2.0);
        assert!(build_dsm(&[], 0.5, 0.0, false).is_err());
    }

    #[test]
    fn hull_of_square() {
        let h = convex_hull(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]);
        assert_eq!(h.len(), 4);
        assert_eq!(hull_span_at(&h, 0.5), Some((0.0, 1.0)));
        assert_eq!(hull_span_at(&h, 2.0), None);
    }
}
