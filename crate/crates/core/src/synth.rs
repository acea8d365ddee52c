//! Seeded multi-story synthetic stands and simulated airborne sampling with
//! per-story penetration loss. Terrain is flat, so heights are elevations.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::eval::{CrownClass, StemRecord};
use crate::model::{Bounds, Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CrownShape {
    Cone,
    Ellipsoid,
}

/// One story (cohort) of a stand.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StorySpec {
    pub count: usize,
    pub height_mean_m: f64,
    pub height_sd_m: f64,
    pub crown_radius_mean_m: f64,
    pub crown_radius_sd_m: f64,
    /// Crown length as a fraction of total height.
    pub crown_depth_ratio: f64,
    pub shape: CrownShape,
    /// Minimum stem distance between trees of this story.
    pub min_spacing_m: f64,
}

impl Default for StorySpec {
    fn default() -> Self {
        Self {
            count: 0,
            height_mean_m: 20.0,
            height_sd_m: 2.0,
            crown_radius_mean_m: 3.0,
            crown_radius_sd_m: 0.5,
            crown_depth_ratio: 0.4,
            shape: CrownShape::Ellipsoid,
            min_spacing_m: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StandSpec {
    pub extent: Bounds,
    /// Ordered from the tallest story down.
    pub stories: Vec<StorySpec>,
    /// Pulses per square meter.
    pub pulse_density_pt_m2: f64,
    /// Fraction of pulses passing each higher story crossed, in (0, 1].
    pub transmission: f64,
    /// Sampled heights and radii are clamped to mean +- this many sd.
    pub clamp_sd: f64,
    /// Placement attempts per tree before giving up.
    pub max_attempts: usize,
    /// Plot id written on the generated stems.
    pub plot_id: String,
    pub seed: u64,
}

impl Default for StandSpec {
    fn default() -> Self {
        Self {
            extent: Bounds {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 50.0,
                max_y: 50.0,
            },
            stories: Vec::new(),
            pulse_density_pt_m2: 20.0,
            transmission: 0.5,
            clamp_sd: 4.0,
            max_attempts: 10_000,
            plot_id: "synth".into(),
            seed: 0,
        }
    }
}

impl StandSpec {
    pub fn validate(&self) -> Result<()> {
        let e = &self.extent;
        if !(e.width() > 0.0 && e.height() > 0.0) {
            return Err(invalid("stand extent must have positive width and height"));
        }
        if !(self.pulse_density_pt_m2 > 0.0) || !self.pulse_density_pt_m2.is_finite() {
            return Err(invalid("pulse density must be positive"));
        }
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(invalid(format!(
                "transmission must be in (0, 1], got {}",
                self.transmission
            )));
        }
        if !(self.clamp_sd >= 0.0) {
            return Err(invalid("clamp_sd must be non-negative"));
        }
        for (i, s) in self.stories.iter().enumerate() {
            if !(s.height_mean_m > 0.0) || !(s.height_sd_m >= 0.0) {
                return Err(invalid(format!(
                    "story {i}: height mean must be positive and sd non-negative"
                )));
            }
            if !(s.crown_radius_mean_m > 0.0) || !(s.crown_radius_sd_m >= 0.0) {
                return Err(invalid(format!(
                    "story {i}: crown radius mean must be positive and sd non-negative"
                )));
            }
            if !(s.crown_depth_ratio > 0.0 && s.crown_depth_ratio <= 1.0) {
                return Err(invalid(format!("story {i}: crown depth ratio must be in (0, 1]")));
            }
            if !(s.min_spacing_m >= 0.0) {
                return Err(invalid(format!("story {i}: min spacing must be non-negative")));
            }
        }
        if self.stories.windows(2).any(|w| w[0].height_mean_m < w[1].height_mean_m) {
            return Err(invalid("stories must be ordered by descending mean height"));
        }
        Ok(())
    }
}

/// A generated tree. Ids are 1-based and unique within a stand.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub total_height_m: f64,
    pub crown_base_m: f64,
    pub crown_radius_m: f64,
    pub shape: CrownShape,
    /// 0 is the top story.
    pub story: usize,
}

impl TreeSpec {
    /// Height of the crown envelope's upper surface at horizontal offset
    /// `(dx, dy)` from the stem, if inside the crown disc.
    pub fn surface_at(&self, dx: f64, dy: f64) -> Option<f64> {
        let r2 = dx * dx + dy * dy;
        let big_r = self.crown_radius_m;
        if r2 > big_r * big_r {
            return None;
        }
        let t = libm::sqrt(r2) / big_r;
        let (top, base) = (self.total_height_m, self.crown_base_m);
        Some(match self.shape {
            CrownShape::Cone => base + (top - base) * (1.0 - t),
            CrownShape::Ellipsoid => {
                let mid = 0.5 * (top + base);
                mid + 0.5 * (top - base) * libm::sqrt((1.0 - t * t).max(0.0))
            }
        })
    }
}

/// Normal draw clamped to `mean +- clamp_sd * sd`.
fn clamped_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, clamp_sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let v = Normal::new(mean, sd).expect("sd validated").sample(rng);
    v.clamp(mean - clamp_sd * sd, mean + clamp_sd * sd)
}

/// Places the trees of every story. Stems are uniform over the extent with
/// rejection of same-story neighbors closer than the story's spacing.
pub fn generate_stand(spec: &StandSpec, seed: u64) -> Result<Vec<TreeSpec>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = spec.extent;
    let mut trees: Vec<TreeSpec> = Vec::new();
    for (story, s) in spec.stories.iter().enumerate() {
        let first = trees.len();
        for n in 0..s.count {
            let mut placed = None;
            for _ in 0..spec.max_attempts.max(1) {
                let x = rng.random_range(e.min_x..e.max_x);
                let y = rng.random_range(e.min_y..e.max_y);
                let clear = trees[first..]
                    .iter()
                    .all(|t| (t.x - x) * (t.x - x) + (t.y - y) * (t.y - y) >= s.min_spacing_m * s.min_spacing_m);
                if clear {
                    placed = Some((x, y));
                    break;
                }
            }
            let Some((x, y)) = placed else {
                return Err(Error::Generation(format!(
                    "story {story}: could not place tree {} of {} with {} m spacing after {} attempts",
                    n + 1,
                    s.count,
                    s.min_spacing_m,
                    spec.max_attempts
                )));
            };
            let h = clamped_normal(&mut rng, s.height_mean_m, s.height_sd_m, spec.clamp_sd).max(0.5);
            let r = clamped_normal(&mut rng, s.crown_radius_mean_m, s.crown_radius_sd_m, spec.clamp_sd).max(0.3);
            trees.push(TreeSpec {
                id: trees.len() as u32 + 1,
                x,
                y,
                total_height_m: h,
                crown_base_m: h * (1.0 - s.crown_depth_ratio),
                crown_radius_m: r,
                shape: s.shape,
                story,
            });
        }
    }
    Ok(trees)
}

/// Simulated cloud plus its field truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimCloud {
    /// Crown returns carry `source_id` = tree id; ground returns are flagged.
    pub cloud: PointCloud,
    pub stems: Vec<StemRecord>,
}

/// Bucket grid over tree crowns for point-in-disc lookups.
struct CrownIndex {
    origin: (f64, f64),
    cell: f64,
    ncols: usize,
    nrows: usize,
    buckets: Vec<Vec<u32>>,
}

impl CrownIndex {
    fn new(trees: &[TreeSpec], extent: &Bounds) -> Self {
        let cell = trees.iter().map(|t| t.crown_radius_m).fold(1.0, f64::max);
        let ncols = (libm::ceil(extent.width() / cell) as usize).max(1);
        let nrows = (libm::ceil(extent.height() / cell) as usize).max(1);
        let mut buckets = vec![Vec::new(); ncols * nrows];
        let origin = (extent.min_x, extent.min_y);
        for (i, t) in trees.iter().enumerate() {
            let c0 = Self::clamp_idx((t.x - t.crown_radius_m - origin.0) / cell, ncols);
            let c1 = Self::clamp_idx((t.x + t.crown_radius_m - origin.0) / cell, ncols);
            let r0 = Self::clamp_idx((t.y - t.crown_radius_m - origin.1) / cell, nrows);
            let r1 = Self::clamp_idx((t.y + t.crown_radius_m - origin.1) / cell, nrows);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets[r * ncols + c].push(i as u32);
                }
            }
        }
        Self {
            origin,
            cell,
            ncols,
            nrows,
            buckets,
        }
    }

    fn clamp_idx(v: f64, n: usize) -> usize {
        if v <= 0.0 {
            0
        } else {
            (libm::floor(v) as usize).min(n - 1)
        }
    }

    fn candidates(&self, x: f64, y: f64) -> &[u32] {
        let c = Self::clamp_idx((x - self.origin.0) / self.cell, self.ncols);
        let r = Self::clamp_idx((y - self.origin.1) / self.cell, self.nrows);
        &self.buckets[r * self.ncols + c]
    }
}

/// Fires `round(density * area)` pulses uniformly over the extent.
///
/// At each pulse location every story whose crowns cover it offers one
/// return from its highest envelope there. That return survives with
/// probability `transmission^k`, `k` being the number of higher stories
/// that also cover the location. A pulse with no surviving crown return
/// yields a ground return at height 0.
pub fn sample_points(stand: &[TreeSpec], spec: &StandSpec, seed: u64) -> Result<SimCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let e = spec.extent;
    let area = e.area();
    let pulses = libm::round(spec.pulse_density_pt_m2 * area) as usize;
    let index = CrownIndex::new(stand, &e);
    let n_stories = stand.iter().map(|t| t.story + 1).max().unwrap_or(0);
    let mut best: Vec<Option<(f64, u32)>> = vec![None; n_stories];
    let mut points = Vec::with_capacity(pulses + pulses / 4);
    for _ in 0..pulses {
        let x = rng.random_range(e.min_x..e.max_x);
        let y = rng.random_range(e.min_y..e.max_y);
        best.iter_mut().for_each(|b| *b = None);
        for &i in index.candidates(x, y) {
            let t = &stand[i as usize];
            if let Some(z) = t.surface_at(x - t.x, y - t.y) {
                let slot = &mut best[t.story];
                if slot.map_or(true, |(bz, _)| z > bz) {
                    *slot = Some((z, t.id));
                }
            }
        }
        let mut covering_above = 0i32;
        let mut any = false;
        for b in &best {
            let Some((z, id)) = *b else { continue };
            let keep = covering_above == 0 || rng.random::<f64>() < libm::pow(spec.transmission, covering_above as f64);
            if keep {
                points.push(Point::new(x, y, z).with_source(id));
                any = true;
            }
            covering_above += 1;
        }
        if !any {
            points.push(Point::ground(x, y, 0.0));
        }
    }
    let cloud = PointCloud::new(points, area)?;
    Ok(SimCloud {
        cloud,
        stems: ground_truth_stems(stand, &spec.plot_id),
    })
}

/// One stem record per tree; the top story maps to `codominant`, every
/// lower story to `intermediate`.
pub fn ground_truth_stems(stand: &[TreeSpec], plot_id: &str) -> Vec<StemRecord> {
    stand
        .iter()
        .map(|t| StemRecord {
            plot_id: plot_id.into(),
            x: t.x,
            y: t.y,
            height_m: t.total_height_m,
            crown_class: if t.story == 0 {
                CrownClass::Codominant
            } else {
                CrownClass::Intermediate
            },
            live: true,
        })
        .collect()
}

/// `generate_stand` followed by `sample_points` with the same seed.
pub fn simulate(spec: &StandSpec, seed: u64) -> Result<(Vec<TreeSpec>, SimCloud)> {
    let stand = generate_stand(spec, seed)?;
    let sim = sample_points(&stand, spec, seed)?;
    Ok((stand, sim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::StoryGroup;

    fn story(count: usize, mean: f64) -> StorySpec {
        StorySpec {
            count,
            height_mean_m: mean,
            ..Default::default()
        }
    }

    fn spec(stories: Vec<StorySpec>, t: f64) -> StandSpec {
        StandSpec {
            stories,
            transmission: t,
            ..Default::default()
        }
    }

    #[test]
    fn empty_and_deterministic() {
        let s = spec(vec![story(0, 25.0)], 1.0);
        assert!(generate_stand(&s, 1).unwrap().is_empty());
        let s = spec(vec![story(30, 25.0), story(40, 10.0)], 0.3);
        assert_eq!(generate_stand(&s, 9).unwrap(), generate_stand(&s, 9).unwrap());
        assert_eq!(simulate(&s, 9).unwrap(), simulate(&s, 9).unwrap());
        assert_ne!(generate_stand(&s, 9).unwrap(), generate_stand(&s, 10).unwrap());
    }

    #[test]
    fn heights_stay_in_clamp() {
        let s = spec(vec![story(50, 25.0)], 1.0);
        for seed in 0..20 {
            for t in generate_stand(&s, seed).unwrap() {
                assert!((17.0..=33.0).contains(&t.total_height_m));
                assert!(t.crown_base_m < t.total_height_m && t.crown_base_m >= 0.0);
            }
        }
    }

    #[test]
    fn impossible_spacing_fails() {
        let mut st = story(50, 25.0);
        st.min_spacing_m = 40.0;
        let mut s = spec(vec![st], 1.0);
        s.max_attempts = 50;
        assert!(matches!(generate_stand(&s, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn envelopes() {
        let t = TreeSpec {
            id: 1,
            x: 0.0,
            y: 0.0,
            total_height_m: 20.0,
            crown_base_m: 12.0,
            crown_radius_m: 4.0,
            shape: CrownShape::Cone,
            story: 0,
        };
        assert_eq!(t.surface_at(0.0, 0.0), Some(20.0));
        assert_eq!(t.surface_at(4.0, 0.0), Some(12.0));
        assert_eq!(t.surface_at(2.0, 0.0), Some(16.0));
        assert_eq!(t.surface_at(4.1, 0.0), None);
        let e = TreeSpec {
            shape: CrownShape::Ellipsoid,
            ..t
        };
        assert_eq!(e.surface_at(0.0, 0.0), Some(20.0));
        assert_eq!(e.surface_at(4.0, 0.0), Some(16.0));
    }

    #[test]
    fn points_lie_on_their_crowns() {
        let s = spec(vec![story(20, 25.0), story(30, 10.0)], 0.4);
        let (stand, sim) = simulate(&s, 3).unwrap();
        for p in sim.cloud.points() {
            match p.source_id {
                None => {
                    assert!(p.ground);
                    assert_eq!(p.z, 0.0);
                }
                Some(id) => {
                    let t = &stand[id as usize - 1];
                    let z = t.surface_at(p.x - t.x, p.y - t.y).expect("inside crown disc");
                    assert!((z - p.z).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn density_accounting_single_story() {
        let s = spec(vec![story(40, 20.0)], 1.0);
        for seed in 0..5 {
            let (_, sim) = simulate(&s, seed).unwrap();
            let d = sim.cloud.len() as f64 / s.extent.area();
            assert!((d - s.pulse_density_pt_m2).abs() <= 0.1 * s.pulse_density_pt_m2);
        }
    }

    /// Under-story returns beneath one covering story are thinned to about
    /// `transmission` of the uncovered rate.
    #[test]
    fn attenuation_under_overlap() {
        let over = TreeSpec {
            id: 1,
            x: 25.0,
            y: 25.0,
            total_height_m: 25.0,
            crown_base_m: 15.0,
            crown_radius_m: 10.0,
            shape: CrownShape::Ellipsoid,
            story: 0,
        };
        let under_covered = TreeSpec {
            id: 2,
            x: 25.0,
            y: 25.0,
            total_height_m: 10.0,
            crown_base_m: 6.0,
            crown_radius_m: 5.0,
            shape: CrownShape::Ellipsoid,
            story: 1,
        };
        let under_open = TreeSpec {
            id: 3,
            x: 6.0,
            y: 6.0,
            ..under_covered
        };
        let stand = [over, under_covered, under_open];
        let s = spec(vec![], 0.1);
        let (mut covered, mut open) = (0usize, 0usize);
        for seed in 0..10 {
            let sim = sample_points(&stand, &s, seed).unwrap();
            for p in sim.cloud.points() {
                match p.source_id {
                    Some(2) => covered += 1,
                    Some(3) => open += 1,
                    _ => {}
                }
            }
        }
        let ratio = covered as f64 / open as f64;
        assert!((ratio - 0.1).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn stems_follow_stories() {
        let s = spec(vec![story(3, 25.0), story(2, 10.0)], 1.0);
        let stand = generate_stand(&s, 4).unwrap();
        let stems = ground_truth_stems(&stand, "p");
        assert_eq!(stems.len(), 5);
        assert_eq!(stems[0].group(), StoryGroup::OverStory);
        assert_eq!(stems[4].group(), StoryGroup::UnderStory);
        for (t, s) in stand.iter().zip(&stems) {
            assert_eq!(t.total_height_m, s.height_m);
        }
    }
}
