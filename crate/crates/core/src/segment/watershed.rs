//! Marker detection and marker-controlled priority-flood watershed.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::math::TotalF64;
use crate::raster::{GridGeometry, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub col: usize,
    pub row: usize,
    pub height: f64,
}

/// Regional maxima of a surface model at or above `min_height`.
///
/// A maximum is a connected (8-neighbor) set of equal-valued cells with no
/// higher neighbor and at least one lower one; single cells qualify when
/// strictly greater than every neighbor. Each maximum yields one marker at
/// its smallest `(col, row)` cell. Markers are returned sorted by
/// `(col, row)`; their position in the list is their id.
pub fn detect_maxima(dsm: &Raster, min_height: f64) -> Vec<Marker> {
    let g = dsm.geometry;
    let mut visited = vec![false; g.len()];
    let mut markers = Vec::new();
    let mut stack = Vec::new();
    let mut plateau = Vec::new();
    for start in 0..g.len() {
        let v = match dsm.values[start] {
            Some(v) if !visited[start] && v >= min_height => v,
            _ => continue,
        };
        plateau.clear();
        stack.push(start);
        visited[start] = true;
        let (mut higher, mut lower) = (false, false);
        while let Some(k) = stack.pop() {
            plateau.push(k);
            for j in g.neighbors8(k) {
                match dsm.values[j] {
                    Some(w) if w == v => {
                        if !visited[j] {
                            visited[j] = true;
                            stack.push(j);
                        }
                    }
                    Some(w) if w > v => higher = true,
                    Some(_) => lower = true,
                    None => {}
                }
            }
        }
        if !higher && lower {
            let k = *plateau
                .iter()
                .min_by_key(|&&k| g.col_row(k))
                .expect("plateau holds its seed");
            let (col, row) = g.col_row(k);
            markers.push(Marker { col, row, height: v });
        }
    }
    markers.sort_by_key(|m| (m.col, m.row));
    markers
}

/// Cell labels; `labels[k]` is the marker id owning cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub geometry: GridGeometry,
    pub labels: Vec<Option<u32>>,
}

impl LabelRaster {
    pub fn get(&self, col: usize, row: usize) -> Option<u32> {
        if col >= self.geometry.ncols || row >= self.geometry.nrows {
            return None;
        }
        self.labels[self.geometry.index(col, row)]
    }

    pub fn distinct_labels(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.iter().flatten().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Labels extended to every cell by nearest labeled cell (8-neighbor
    /// breadth-first distance; ties go to the first label to arrive).
    pub(crate) fn nearest_fill(&self) -> Vec<Option<u32>> {
        let g = self.geometry;
        let mut out = self.labels.clone();
        let mut queue: alloc::collections::VecDeque<usize> = (0..g.len()).filter(|&k| out[k].is_some()).collect();
        while let Some(k) = queue.pop_front() {
            let l = out[k];
            for j in g.neighbors8(k) {
                if out[j].is_none() {
                    out[j] = l;
                    queue.push_back(j);
                }
            }
        }
        out
    }
}

/// Grows one region per marker over the filled cells, claiming the highest
/// unclaimed frontier cell first. Equal heights go to the smaller marker id,
/// then the smaller cell index. Filled cells not connected to any marker
/// stay unlabeled.
pub fn watershed(dsm: &Raster, markers: &[Marker]) -> LabelRaster {
    let g = dsm.geometry;
    let mut labels: Vec<Option<u32>> = vec![None; g.len()];
    let mut heap = BinaryHeap::new();
    for (id, m) in markers.iter().enumerate() {
        let k = g.index(m.col, m.row);
        if labels[k].is_none() && dsm.values[k].is_some() {
            labels[k] = Some(id as u32);
            heap.push((TotalF64(m.height), Reverse(id as u32), Reverse(k)));
        }
    }
    while let Some((_, Reverse(id), Reverse(k))) = heap.pop() {
        for j in g.neighbors8(k) {
            if labels[j].is_some() {
                continue;
            }
            if let Some(h) = dsm.values[j] {
                labels[j] = Some(id);
                heap.push((TotalF64(h), Reverse(id), Reverse(j)));
            }
        }
    }
    LabelRaster { geometry: g, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize) -> GridGeometry {
        GridGeometry {
            origin_x: 0.0,
            origin_y: 0.0,
            cell_size: 1.0,
            ncols: n,
            nrows: n,
        }
    }

    fn raster_from(n: usize, f: impl Fn(f64, f64) -> f64) -> Raster {
        let g = geom(n);
        let mut r = Raster::new_void(g);
        for row in 0..n {
            for col in 0..n {
                r.set(col, row, Some(f(col as f64, row as f64)));
            }
        }
        r
    }

    fn cone(cx: f64, cy: f64, top: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| (top - ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()).max(0.0)
    }

    #[test]
    fn single_cone_has_one_marker_at_apex() {
        let r = raster_from(9, cone(4.0, 4.0, 10.0));
        let m = detect_maxima(&r, 2.0);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].col, m[0].row), (4, 4));
    }

    /// Brute-force oracle: a cell is a strict local max when it beats all
    /// existing neighbors.
    fn strict_maxima(r: &Raster, min_h: f64) -> Vec<(usize, usize)> {
        let g = r.geometry;
        let mut out = Vec::new();
        for row in 0..g.nrows {
            for col in 0..g.ncols {
                let v = r.get(col, row).unwrap();
                if v < min_h {
                    continue;
                }
                let mut ok = true;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (c, rr) = (col as i64 + dc, row as i64 + dr);
                        if c < 0 || rr < 0 || c >= g.ncols as i64 || rr >= g.nrows as i64 {
                            continue;
                        }
                        if r.get(c as usize, rr as usize).unwrap() >= v {
                            ok = false;
                        }
                    }
                }
                if ok {
                    out.push((col, row));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn two_bumps_give_two_markers() {
        let a = cone(2.0, 4.0, 10.0);
        let b = cone(7.0, 4.0, 9.0);
        let r = raster_from(10, move |x, y| a(x, y).max(b(x, y)));
        let m = detect_maxima(&r, 2.0);
        let got: Vec<_> = m.iter().map(|m| (m.col, m.row)).collect();
        assert_eq!(got, strict_maxima(&r, 2.0));
        assert_eq!(got, vec![(2, 4), (7, 4)]);
    }

    #[test]
    fn flat_raster_has_no_markers() {
        let r = raster_from(6, |_, _| 5.0);
        assert!(detect_maxima(&r, 2.0).is_empty());
    }

    #[test]
    fn plateau_marker_is_smallest_cell() {
        let r = raster_from(6, |x, y| {
            if (2.0..=3.0).contains(&x) && (1.0..=2.0).contains(&y) {
                8.0
            } else {
                3.0
            }
        });
        let m = detect_maxima(&r, 2.0);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].col, m[0].row), (2, 1));
    }

    #[test]
    fn low_maxima_are_ignored() {
        let r = raster_from(5, cone(2.0, 2.0, 1.5));
        assert!(detect_maxima(&r, 2.0).is_empty());
    }

    #[test]
    fn one_marker_claims_everything() {
        let r = raster_from(7, cone(3.0, 3.0, 10.0));
        let m = detect_maxima(&r, 2.0);
        let l = watershed(&r, &m);
        assert!(l.labels.iter().all(|&x| x == Some(0)));
        assert!(watershed(&r, &[]).labels.iter().all(Option::is_none));
    }

    /// Brute-force oracle for the flood: repeatedly scan every unlabeled cell
    /// adjacent to a labeled one and claim the best by (height of the
    /// claiming source, smaller label, smaller source index), which is the order
    /// a priority queue pops sources in.
    fn brute_force_flood(r: &Raster, markers: &[Marker]) -> Vec<Option<u32>> {
        let g = r.geometry;
        let mut labels = vec![None; g.len()];
        let mut expanded = vec![false; g.len()];
        for (i, m) in markers.iter().enumerate() {
            labels[g.index(m.col, m.row)] = Some(i as u32);
        }
        loop {
            // pick the highest labeled, not yet expanded cell
            let mut best: Option<(f64, u32, usize)> = None;
            for k in 0..g.len() {
                if let (Some(l), false) = (labels[k], expanded[k]) {
                    let h = r.values[k].unwrap();
                    let better = match best {
                        None => true,
                        Some((bh, bl, bk)) => h > bh || (h == bh && (l < bl || (l == bl && k < bk))),
                    };
                    if better {
                        best = Some((h, l, k));
                    }
                }
            }
            let Some((_, l, k)) = best else { break };
            expanded[k] = true;
            for j in g.neighbors8(k) {
                if labels[j].is_none() {
                    labels[j] = Some(l);
                }
            }
        }
        labels
    }

    #[test]
    fn symmetric_bumps_match_brute_force_flood() {
        let a = cone(2.0, 4.5, 10.0);
        let b = cone(7.0, 4.5, 10.0);
        let r = raster_from(10, move |x, y| a(x, y).max(b(x, y)));
        let m = detect_maxima(&r, 2.0);
        assert_eq!(m.len(), 2);
        let l = watershed(&r, &m);
        assert_eq!(l.labels, brute_force_flood(&r, &m));
        assert_eq!(l.distinct_labels(), m.len());
        for (id, mk) in m.iter().enumerate() {
            assert_eq!(l.get(mk.col, mk.row), Some(id as u32));
        }
        // the bump cells belong to their own marker
        assert_eq!(l.get(1, 4), Some(0));
        assert_eq!(l.get(8, 4), Some(1));
    }

    #[test]
    fn nearest_fill_reaches_every_cell() {
        let mut r = Raster::new_void(geom(5));
        r.set(0, 0, Some(5.0));
        r.set(1, 0, Some(4.0));
        r.set(4, 4, Some(6.0));
        r.set(3, 4, Some(3.0));
        let m = detect_maxima(&r, 0.0);
        let l = watershed(&r, &m);
        let full = l.nearest_fill();
        assert!(full.iter().all(Option::is_some));
        assert_eq!(full[r.geometry.index(0, 1)], Some(0));
        assert_eq!(full[r.geometry.index(4, 3)], Some(1));
    }
}
