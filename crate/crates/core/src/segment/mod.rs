//! Per-layer crown segmentation and the full segmentation pipeline.
//!
//! The segmenter is pluggable through [`CrownSegmenter`]; the default
//! [`WatershedSegmenter`] runs a marker-controlled watershed on a smoothed
//! max-height surface model of each layer.

mod dsm;
mod watershed;

pub use dsm::build_dsm;
pub use watershed::{detect_maxima, watershed, LabelRaster, Marker};

use alloc::vec;
use alloc::vec::Vec;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{afp_from_density, normalize_heights, Point, PointCloud};
use crate::raster::DemRaster;
use crate::stratify::{stratify, CanopyLayer, LayerSummary};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Apex {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A segmented tree crown.
#[derive(Debug, Clone, PartialEq)]
pub struct Crown {
    pub id: u32,
    /// 1-based index of the layer the crown was segmented in.
    pub layer_index: usize,
    /// Highest member point.
    pub apex: Apex,
    /// Ascending point ids.
    pub member_point_ids: Vec<usize>,
    pub footprint_area_m2: f64,
    /// Diameter of the circle with the footprint's area.
    pub avg_width_m: f64,
}

pub fn equivalent_diameter(area_m2: f64) -> f64 {
    2.0 * libm::sqrt(area_m2 / core::f64::consts::PI)
}

/// Turns a labeling into crowns over `points` (ids are positions in
/// `points`). Points in unlabeled cells join the crown of the nearest
/// labeled cell. Crowns without members are skipped; ids are label order
/// starting at 0 and are expected to be renumbered by the caller.
pub fn crowns_from_labels(points: &[Point], labels: &LabelRaster, layer_index: usize) -> Vec<Crown> {
    let g = labels.geometry;
    let n_labels = labels
        .labels
        .iter()
        .flatten()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);
    if n_labels == 0 {
        return Vec::new();
    }
    let mut cells_per_label = vec![0usize; n_labels];
    for l in labels.labels.iter().flatten() {
        cells_per_label[*l as usize] += 1;
    }
    let mut full: Option<Vec<Option<u32>>> = None;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (i, p) in points.iter().enumerate() {
        let Some((c, r)) = g.cell_of(p.x, p.y) else {
            continue;
        };
        let k = g.index(c, r);
        let label = match labels.labels[k] {
            Some(l) => l,
            None => {
                let f = full.get_or_insert_with(|| labels.nearest_fill());
                match f[k] {
                    Some(l) => l,
                    None => continue,
                }
            }
        };
        members[label as usize].push(i);
    }
    let cell_area = g.cell_size * g.cell_size;
    members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(label, m)| {
            let top = m
                .iter()
                .copied()
                .reduce(|a, b| if points[b].z > points[a].z { b } else { a })
                .expect("non-empty");
            let footprint = cells_per_label[label] as f64 * cell_area;
            Crown {
                id: label as u32,
                layer_index,
                apex: Apex {
                    x: points[top].x,
                    y: points[top].y,
                    z: points[top].z,
                },
                member_point_ids: m,
                footprint_area_m2: footprint,
                avg_width_m: equivalent_diameter(footprint),
            }
        })
        .collect()
}

/// Noise rule: drop crowns narrower than `min_width_m` or with an apex
/// below `min_height_m`. Returns the kept crowns and the dropped count.
pub fn filter_noise(crowns: Vec<Crown>, min_width_m: f64, min_height_m: f64) -> (Vec<Crown>, usize) {
    let before = crowns.len();
    let kept: Vec<Crown> = crowns
        .into_iter()
        .filter(|c| c.avg_width_m >= min_width_m && c.apex.z >= min_height_m)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Segments one canopy layer into crowns. Member ids are positions in
/// `points`.
pub trait CrownSegmenter: Sync {
    fn segment_layer(&self, points: &[Point], layer_afp_m: f64, layer_index: usize) -> Result<Vec<Crown>>;
}

/// Marker-controlled watershed on a smoothed max-height surface model.
#[derive(Debug, Clone, PartialEq)]
pub struct WatershedSegmenter {
    pub cell_size_m: f64,
    pub smoothing: bool,
    pub marker_min_height_m: f64,
}

impl WatershedSegmenter {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            cell_size_m: config.dsm_cell_m,
            smoothing: config.dsm_smoothing,
            marker_min_height_m: config.marker_min_height_m,
        }
    }
}

impl CrownSegmenter for WatershedSegmenter {
    fn segment_layer(&self, points: &[Point], layer_afp_m: f64, layer_index: usize) -> Result<Vec<Crown>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let dsm = build_dsm(points, self.cell_size_m, layer_afp_m, self.smoothing)?;
        let mut markers = detect_maxima(&dsm, self.marker_min_height_m);
        if markers.is_empty() {
            // no regional maximum: seed from the highest filled cell so every
            // layer point still lands in a crown
            let g = dsm.geometry;
            let best = (0..g.len())
                .filter_map(|k| dsm.values[k].map(|v| (k, v)))
                .reduce(|a, b| if b.1 > a.1 { b } else { a });
            if let Some((k, v)) = best {
                let (col, row) = g.col_row(k);
                markers.push(Marker { col, row, height: v });
            }
        }
        let labels = watershed(&dsm, &markers);
        Ok(crowns_from_labels(points, &labels, layer_index))
    }
}

/// Per-layer record kept in a segmentation result.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerReport {
    pub index: usize,
    pub summary: LayerSummary,
    pub afp_m: f64,
    pub ground_vegetation: bool,
    /// Crowns kept after the noise filter.
    pub crown_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Crown ids are 1-based and unique; member ids index the input cloud.
    pub crowns: Vec<Crown>,
    pub layers: Vec<LayerReport>,
    pub dropped_noise_count: usize,
}

impl SegmentationResult {
    /// `crown_id` per input point (`None` for ground, dropped or unassigned).
    pub fn assignments(&self, input_len: usize) -> Vec<Option<u32>> {
        let mut out = vec![None; input_len];
        for c in &self.crowns {
            for &i in &c.member_point_ids {
                out[i] = Some(c.id);
            }
        }
        out
    }
}

/// Layers of a normalized cloud: the stratified profile, or one layer
/// holding everything when stratification is disabled.
pub fn canopy_layers(normalized: &PointCloud, config: &PipelineConfig) -> Result<Vec<CanopyLayer>> {
    if normalized.is_empty() {
        return Ok(Vec::new());
    }
    if config.stratification_enabled {
        stratify(normalized, config)
    } else {
        Ok(vec![CanopyLayer::whole(normalized, config)?])
    }
}

/// Height-normalized, ground-free cloud plus the input index of each of its
/// points. Without a DEM the cloud is taken as already normalized and only
/// ground-flagged points are removed.
pub fn prepare_cloud(cloud: &PointCloud, dem: Option<&DemRaster>) -> Result<(PointCloud, Vec<usize>)> {
    let index_map: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.ground)
        .map(|(i, _)| i)
        .collect();
    let normalized = match dem {
        Some(dem) => normalize_heights(cloud, dem)?,
        None => cloud.subset(&index_map),
    };
    Ok((normalized, index_map))
}

/// Full pipeline: normalize, stratify (unless disabled), segment every
/// non-ground-vegetation layer, filter noise, and number crowns by layer
/// then label order.
pub fn segment_trees(
    cloud: &PointCloud,
    dem: Option<&DemRaster>,
    config: &PipelineConfig,
) -> Result<SegmentationResult> {
    segment_trees_with(cloud, dem, config, &WatershedSegmenter::from_config(config))
}

pub fn segment_trees_with<S: CrownSegmenter>(
    cloud: &PointCloud,
    dem: Option<&DemRaster>,
    config: &PipelineConfig,
    segmenter: &S,
) -> Result<SegmentationResult> {
    config.validate()?;
    let (normalized, index_map) = prepare_cloud(cloud, dem)?;
    let layers = canopy_layers(&normalized, config)?;

    let run = |layer: &CanopyLayer| -> Result<Vec<Crown>> {
        if layer.ground_vegetation {
            return Ok(Vec::new());
        }
        let afp = afp_from_density(layer.summary.density_pt_m2);
        segmenter.segment_layer(layer.points.points(), afp, layer.index)
    };
    #[cfg(feature = "parallel")]
    let per_layer: Vec<Result<Vec<Crown>>> = {
        use rayon::prelude::*;
        layers.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_layer: Vec<Result<Vec<Crown>>> = layers.iter().map(run).collect();

    let mut crowns = Vec::new();
    let mut reports = Vec::with_capacity(layers.len());
    let mut dropped = 0;
    for (layer, raw) in layers.iter().zip(per_layer) {
        let mut raw = raw?;
        for c in &mut raw {
            for id in &mut c.member_point_ids {
                *id = index_map[layer.point_ids[*id]];
            }
            c.member_point_ids.sort_unstable();
        }
        let (kept, d) = filter_noise(raw, config.noise_min_width_m, config.noise_min_height_m);
        dropped += d;
        reports.push(LayerReport {
            index: layer.index,
            summary: layer.summary,
            afp_m: layer.afp_m,
            ground_vegetation: layer.ground_vegetation,
            crown_count: kept.len(),
        });
        crowns.extend(kept);
    }
    for (i, c) in crowns.iter_mut().enumerate() {
        c.id = i as u32 + 1;
    }
    if crowns.iter().any(|c| c.member_point_ids.is_empty()) {
        return Err(Error::Invariant("crown without members".into()));
    }
    Ok(SegmentationResult {
        crowns,
        layers: reports,
        dropped_noise_count: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridGeometry, Raster};

    fn crown(width: f64, apex_z: f64) -> Crown {
        let area = core::f64::consts::PI * (width / 2.0) * (width / 2.0);
        Crown {
            id: 0,
            layer_index: 1,
            apex: Apex {
                x: 0.0,
                y: 0.0,
                z: apex_z,
            },
            member_point_ids: vec![0],
            footprint_area_m2: area,
            avg_width_m: width,
        }
    }

    #[test]
    fn noise_filter_examples() {
        let (k, d) = filter_noise(vec![crown(1.4, 20.0)], 1.5, 4.0);
        assert!(k.is_empty());
        assert_eq!(d, 1);
        let (k, _) = filter_noise(vec![crown(1.5, 20.0)], 1.5, 4.0);
        assert_eq!(k.len(), 1);
        let (k, _) = filter_noise(vec![crown(3.0, 3.9)], 1.5, 4.0);
        assert!(k.is_empty());
    }

    #[test]
    fn noise_filter_is_idempotent() {
        let cs = vec![crown(1.4, 20.0), crown(2.0, 5.0), crown(2.0, 3.0), crown(1.6, 4.0)];
        let (once, _) = filter_noise(cs, 1.5, 4.0);
        let (twice, d) = filter_noise(once.clone(), 1.5, 4.0);
        assert_eq!(once, twice);
        assert_eq!(d, 0);
    }

    #[test]
    fn four_cells_crown_width() {
        let g = GridGeometry {
            origin_x: 0.0,
            origin_y: 0.0,
            cell_size: 0.5,
            ncols: 2,
            nrows: 2,
        };
        let labels = LabelRaster {
            geometry: g,
            labels: vec![Some(0); 4],
        };
        let pts = [Point::new(0.1, 0.1, 5.0), Point::new(0.9, 0.9, 7.0)];
        let cs = crowns_from_labels(&pts, &labels, 1);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].footprint_area_m2, 1.0);
        // a 1 m^2 disc is 2 / sqrt(pi) m across
        assert!((cs[0].avg_width_m - core::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-12);
        assert_eq!(cs[0].apex, Apex { x: 0.9, y: 0.9, z: 7.0 });
        assert_eq!(cs[0].member_point_ids, vec![0, 1]);
    }

    #[test]
    fn single_cell_crown_apex_is_its_point() {
        let g = GridGeometry {
            origin_x: 0.0,
            origin_y: 0.0,
            cell_size: 0.5,
            ncols: 1,
            nrows: 1,
        };
        let labels = LabelRaster {
            geometry: g,
            labels: vec![Some(0)],
        };
        let pts = [Point::new(0.2, 0.3, 9.0)];
        let cs = crowns_from_labels(&pts, &labels, 2);
        assert_eq!(cs[0].apex, Apex { x: 0.2, y: 0.3, z: 9.0 });
        assert_eq!(cs[0].layer_index, 2);
    }

    #[test]
    fn unlabeled_points_join_the_nearest_crown() {
        let g = GridGeometry {
            origin_x: 0.0,
            origin_y: 0.0,
            cell_size: 1.0,
            ncols: 4,
            nrows: 1,
        };
        let labels = LabelRaster {
            geometry: g,
            labels: vec![Some(0), None, None, Some(1)],
        };
        let pts = [
            Point::new(0.5, 0.5, 5.0),
            Point::new(1.5, 0.5, 4.0),
            Point::new(2.5, 0.5, 4.0),
            Point::new(3.5, 0.5, 6.0),
        ];
        let cs = crowns_from_labels(&pts, &labels, 1);
        let total: usize = cs.iter().map(|c| c.member_point_ids.len()).sum();
        assert_eq!(total, 4);
        assert_eq!(cs[0].member_point_ids, vec![0, 1]);
        assert_eq!(cs[1].member_point_ids, vec![2, 3]);
    }

    fn cone_points(cx: f64, cy: f64, top: f64, radius: f64, spacing: f64) -> Vec<Point> {
        let mut out = Vec::new();
        let n = (2.0 * radius / spacing) as i64;
        for i in 0..=n {
            for j in 0..=n {
                let x = cx - radius + i as f64 * spacing;
                let y = cy - radius + j as f64 * spacing;
                let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                if r <= radius {
                    out.push(Point::new(x, y, top - 0.6 * top * r / radius));
                }
            }
        }
        out
    }

    #[test]
    fn single_tree_yields_one_crown_near_stem() {
        let pts = cone_points(10.0, 10.0, 20.0, 3.0, 0.2);
        let cloud = PointCloud::new(pts, 400.0).unwrap();
        let res = segment_trees(&cloud, None, &PipelineConfig::default()).unwrap();
        assert_eq!(res.crowns.len(), 1);
        let a = res.crowns[0].apex;
        assert!(((a.x - 10.0).powi(2) + (a.y - 10.0).powi(2)).sqrt() < 0.5);
        assert_eq!(res.crowns[0].id, 1);
    }

    #[test]
    fn modes_agree_on_single_layer_cloud() {
        let mut pts = cone_points(6.0, 6.0, 18.0, 3.0, 0.2);
        pts.extend(cone_points(13.0, 8.0, 17.0, 3.0, 0.2));
        let cloud = PointCloud::new(pts, 400.0).unwrap();
        let on = PipelineConfig::default();
        let layers = canopy_layers(&prepare_cloud(&cloud, None).unwrap().0, &on).unwrap();
        assert_eq!(layers.len(), 1);
        let off = PipelineConfig {
            stratification_enabled: false,
            ..Default::default()
        };
        let a = segment_trees(&cloud, None, &on).unwrap();
        let b = segment_trees(&cloud, None, &off).unwrap();
        assert_eq!(a.crowns, b.crowns);
        assert_eq!(a.crowns.len(), 2);
    }

    #[test]
    fn every_layer_point_lands_in_one_crown_before_filtering() {
        let mut pts = cone_points(6.0, 6.0, 18.0, 3.0, 0.25);
        pts.extend(cone_points(12.0, 7.0, 12.0, 2.0, 0.25));
        pts.push(Point::new(1.0, 14.0, 1.0));
        let cloud = PointCloud::new(pts.clone(), 300.0).unwrap();
        let cfg = PipelineConfig::default();
        let layers = canopy_layers(&cloud, &cfg).unwrap();
        let seg = WatershedSegmenter::from_config(&cfg);
        for layer in layers.iter().filter(|l| !l.ground_vegetation) {
            let afp = afp_from_density(layer.summary.density_pt_m2);
            let crowns = seg.segment_layer(layer.points.points(), afp, layer.index).unwrap();
            let mut seen = vec![0u32; layer.len()];
            for c in &crowns {
                for &i in &c.member_point_ids {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn dem_normalization_drops_ground() {
        let mut pts = cone_points(5.0, 5.0, 120.0, 3.0, 0.25);
        for p in &mut pts {
            p.z = 100.0 + (p.z - 100.0).max(0.0);
        }
        pts.push(Point::ground(0.0, 0.0, 100.0));
        pts.push(Point::ground(10.0, 10.0, 100.0));
        let cloud = PointCloud::new(pts, 100.0).unwrap();
        let g = GridGeometry::covering(&cloud.bounds().unwrap(), 1.0).unwrap();
        let dem = Raster::filled(g, 100.0);
        let res = segment_trees(&cloud, Some(&dem), &PipelineConfig::default()).unwrap();
        let a = res.assignments(cloud.len());
        assert_eq!(a[a.len() - 1], None);
        assert_eq!(a[a.len() - 2], None);
    }
}
