//! Matching detected crown apexes to field stem maps and the resulting
//! detection metrics.

mod hungarian;

pub use hungarian::{assignment_total, hungarian_max};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{PipelineConfig, PLOT_RADIUS_0_04_HA};
use crate::error::{invalid, Result};
use crate::segment::Crown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CrownClass {
    Dominant,
    Codominant,
    Intermediate,
    Overtopped,
}

impl CrownClass {
    pub fn group(self) -> StoryGroup {
        match self {
            CrownClass::Dominant | CrownClass::Codominant => StoryGroup::OverStory,
            CrownClass::Intermediate | CrownClass::Overtopped => StoryGroup::UnderStory,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CrownClass::Dominant => "dominant",
            CrownClass::Codominant => "codominant",
            CrownClass::Intermediate => "intermediate",
            CrownClass::Overtopped => "overtopped",
        }
    }

    /// Accepts the lowercase names plus the hyphenated `co-dominant`.
    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim();
        let eq = |name: &str| t.eq_ignore_ascii_case(name);
        if eq("dominant") {
            Some(CrownClass::Dominant)
        } else if eq("codominant") || eq("co-dominant") {
            Some(CrownClass::Codominant)
        } else if eq("intermediate") {
            Some(CrownClass::Intermediate)
        } else if eq("overtopped") {
            Some(CrownClass::Overtopped)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StoryGroup {
    OverStory,
    UnderStory,
}

impl StoryGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            StoryGroup::OverStory => "over-story",
            StoryGroup::UnderStory => "under-story",
        }
    }
}

/// A field-measured stem.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StemRecord {
    pub plot_id: String,
    pub x: f64,
    pub y: f64,
    pub height_m: f64,
    pub crown_class: CrownClass,
    pub live: bool,
}

impl StemRecord {
    pub fn group(&self) -> StoryGroup {
        self.crown_class.group()
    }
}

/// Circular evaluation plot with a buffer ring.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlotSpec {
    pub center_x: f64,
    pub center_y: f64,
    pub radius_m: f64,
    pub buffer_m: f64,
}

impl PlotSpec {
    pub fn new(center_x: f64, center_y: f64) -> Self {
        Self {
            center_x,
            center_y,
            radius_m: PLOT_RADIUS_0_04_HA,
            buffer_m: 4.7,
        }
    }

    pub fn with_config(center_x: f64, center_y: f64, config: &PipelineConfig) -> Self {
        Self {
            center_x,
            center_y,
            radius_m: config.plot_radius_m,
            buffer_m: config.plot_buffer_m,
        }
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        libm::hypot(x - self.center_x, y - self.center_y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchTolerances {
    /// Maximum relative height difference (fraction of stem height).
    pub height: f64,
    /// Maximum lean from nadir (degrees).
    pub lean_deg: f64,
}

impl Default for MatchTolerances {
    fn default() -> Self {
        Self {
            height: 0.30,
            lean_deg: 15.0,
        }
    }
}

impl MatchTolerances {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            height: config.match_height_tol,
            lean_deg: config.match_lean_tol_deg,
        }
    }
}

/// Pairing score in `(0, 2]`, or `None` when the pair breaks either
/// tolerance (both bounds are strict).
pub fn pair_score(apex: (f64, f64, f64), stem: &StemRecord, tol: &MatchTolerances) -> Result<Option<f64>> {
    if !(stem.height_m > 0.0) {
        return Err(invalid(format!("stem height must be positive, got {}", stem.height_m)));
    }
    let (x, y, z) = apex;
    if !(z > 0.0) {
        return Ok(None);
    }
    let rel_dh = libm::fabs(z - stem.height_m) / stem.height_m;
    let lean = libm::atan(libm::hypot(x - stem.x, y - stem.y) / z).to_degrees();
    if rel_dh < tol.height && lean < tol.lean_deg {
        Ok(Some((1.0 - rel_dh / tol.height) + (1.0 - lean / tol.lean_deg)))
    } else {
        Ok(None)
    }
}

/// A detected tree as seen by evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectedTree {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<&Crown> for DetectedTree {
    fn from(c: &Crown) -> Self {
        Self {
            id: c.id,
            x: c.apex.x,
            y: c.apex.y,
            z: c.apex.z,
        }
    }
}

/// Counts and detection metrics of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupMetrics {
    pub mt: usize,
    pub oe: usize,
    pub ce: usize,
    pub recall: f64,
    pub precision: f64,
    pub f_score: f64,
}

impl GroupMetrics {
    /// Recall, precision and F-score from counts; each is 0 when its
    /// denominator is 0.
    pub fn from_counts(mt: usize, oe: usize, ce: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let recall = ratio(mt, mt + oe);
        let precision = ratio(mt, mt + ce);
        let f_score = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Self {
            mt,
            oe,
            ce,
            recall,
            precision,
            f_score,
        }
    }

    pub fn recall_defined(&self) -> bool {
        self.mt + self.oe > 0
    }

    pub fn precision_defined(&self) -> bool {
        self.mt + self.ce > 0
    }

    pub fn f_defined(&self) -> bool {
        self.mt + self.oe + self.ce > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchedPair {
    pub crown_id: u32,
    /// Position of the stem in the plot's stem list.
    pub stem_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchReport {
    pub plot_id: String,
    pub pairs: Vec<MatchedPair>,
    pub over_story: GroupMetrics,
    pub under_story: GroupMetrics,
    pub all: GroupMetrics,
}

impl MatchReport {
    pub fn group(&self, group: Option<StoryGroup>) -> &GroupMetrics {
        match group {
            Some(StoryGroup::OverStory) => &self.over_story,
            Some(StoryGroup::UnderStory) => &self.under_story,
            None => &self.all,
        }
    }
}

/// Matches crowns to the stems of one plot.
///
/// Crowns with apex within radius + buffer of the plot center are
/// candidates. Matching is global; group counts follow the matched stem's
/// class. An unmatched crown inside the core radius is a commission error,
/// charged to the group of the stem nearest to its apex in 3D (overall only
/// when the plot has no stems). Unmatched crowns in the buffer ring count
/// nowhere.
pub fn evaluate_plot(
    plot_id: &str,
    crowns: &[DetectedTree],
    stems: &[StemRecord],
    plot: &PlotSpec,
    tol: &MatchTolerances,
) -> Result<MatchReport> {
    for (i, s) in stems.iter().enumerate() {
        let d = plot.distance(s.x, s.y);
        if d > plot.radius_m + 1e-9 {
            return Err(invalid(format!(
                "stem {i} of plot {plot_id} lies {d:.3} m from the center, outside the {:.3} m radius",
                plot.radius_m
            )));
        }
        if !(s.height_m > 0.0) {
            return Err(invalid(format!("stem {i} of plot {plot_id} has non-positive height")));
        }
    }
    let mut candidates: Vec<DetectedTree> = crowns
        .iter()
        .copied()
        .filter(|c| plot.distance(c.x, c.y) <= plot.radius_m + plot.buffer_m)
        .collect();
    candidates.sort_by(|a, b| a.id.cmp(&b.id).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y)));

    let mut scores = Vec::with_capacity(stems.len());
    for s in stems {
        let mut row = Vec::with_capacity(candidates.len());
        for c in &candidates {
            row.push(pair_score((c.x, c.y, c.z), s, tol)?);
        }
        scores.push(row);
    }
    let assignment = hungarian_max(&scores);

    let mut stem_matched = alloc::vec![false; stems.len()];
    let mut crown_matched = alloc::vec![false; candidates.len()];
    let mut pairs = Vec::with_capacity(assignment.len());
    for &(si, ci) in &assignment {
        stem_matched[si] = true;
        crown_matched[ci] = true;
        pairs.push(MatchedPair {
            crown_id: candidates[ci].id,
            stem_index: si,
            score: scores[si][ci].expect("assigned pairs are eligible"),
        });
    }

    let mut counts = [[0usize; 3]; 2]; // [group][mt, oe, ce]
    let mut ce_all = 0;
    let slot = |g: StoryGroup| match g {
        StoryGroup::OverStory => 0,
        StoryGroup::UnderStory => 1,
    };
    for (i, s) in stems.iter().enumerate() {
        let g = slot(s.group());
        if stem_matched[i] {
            counts[g][0] += 1;
        } else {
            counts[g][1] += 1;
        }
    }
    for (ci, c) in candidates.iter().enumerate() {
        if crown_matched[ci] || plot.distance(c.x, c.y) > plot.radius_m {
            continue;
        }
        ce_all += 1;
        let nearest = stems
            .iter()
            .map(|s| {
                let d2 =
                    (s.x - c.x) * (s.x - c.x) + (s.y - c.y) * (s.y - c.y) + (s.height_m - c.z) * (s.height_m - c.z);
                (d2, s.group())
            })
            .reduce(|a, b| if b.0 < a.0 { b } else { a });
        if let Some((_, g)) = nearest {
            counts[slot(g)][2] += 1;
        }
    }
    let over = GroupMetrics::from_counts(counts[0][0], counts[0][1], counts[0][2]);
    let under = GroupMetrics::from_counts(counts[1][0], counts[1][1], counts[1][2]);
    let all = GroupMetrics::from_counts(pairs.len(), stems.len() - pairs.len(), ce_all);
    Ok(MatchReport {
        plot_id: plot_id.into(),
        pairs,
        over_story: over,
        under_story: under,
        all,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Metric {
    Recall,
    Precision,
    FScore,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Recall, Metric::Precision, Metric::FScore];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::FScore => "f-score",
        }
    }

    pub fn value(self, m: &GroupMetrics) -> Option<f64> {
        let (defined, v) = match self {
            Metric::Recall => (m.recall_defined(), m.recall),
            Metric::Precision => (m.precision_defined(), m.precision),
            Metric::FScore => (m.f_defined(), m.f_score),
        };
        defined.then_some(v)
    }
}

/// Groups in report order; `None` is all trees.
pub const REPORT_GROUPS: [Option<StoryGroup>; 3] = [Some(StoryGroup::OverStory), Some(StoryGroup::UnderStory), None];

pub fn group_label(group: Option<StoryGroup>) -> &'static str {
    group.map_or("all", StoryGroup::as_str)
}

/// Mean of one metric over the plots where it is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricMean {
    pub group: Option<StoryGroup>,
    pub metric: Metric,
    pub mean: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregateSummary {
    pub plots: usize,
    /// One entry per (group, metric) in [`REPORT_GROUPS`] x [`Metric::ALL`] order.
    pub means: Vec<MetricMean>,
}

impl AggregateSummary {
    pub fn mean(&self, group: Option<StoryGroup>, metric: Metric) -> Option<&MetricMean> {
        self.means.iter().find(|m| m.group == group && m.metric == metric)
    }
}

/// Unweighted per-plot means of recall, precision and F-score for every
/// group. A plot contributes to a metric only when that metric's
/// denominator is non-zero for it; a mean with no samples is 0.
pub fn aggregate_reports(reports: &[MatchReport]) -> Result<AggregateSummary> {
    if reports.is_empty() {
        return Err(invalid("cannot aggregate an empty list of reports"));
    }
    let mut means = Vec::with_capacity(9);
    for group in REPORT_GROUPS {
        for metric in Metric::ALL {
            let vals: Vec<f64> = reports.iter().filter_map(|r| metric.value(r.group(group))).collect();
            let mean = if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            means.push(MetricMean {
                group,
                metric,
                mean,
                samples: vals.len(),
            });
        }
    }
    Ok(AggregateSummary {
        plots: reports.len(),
        means,
    })
}

/// Paired per-plot change of one metric between two pipeline modes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricDelta {
    pub group: Option<StoryGroup>,
    pub metric: Metric,
    /// Plots where the metric is defined in both modes.
    pub samples: usize,
    /// Mean of `treatment - baseline`.
    pub mean_delta: f64,
    /// Sample variance of the paired deltas (0 with fewer than 2 samples).
    pub mse: f64,
}

/// Paired deltas `treatment - baseline`; reports are paired by position
/// and must name the same plots.
pub fn paired_deltas(baseline: &[MatchReport], treatment: &[MatchReport]) -> Result<Vec<MetricDelta>> {
    if baseline.len() != treatment.len() {
        return Err(invalid(format!(
            "paired comparison needs equal report counts, got {} and {}",
            baseline.len(),
            treatment.len()
        )));
    }
    if baseline.is_empty() {
        return Err(invalid("cannot compare empty report lists"));
    }
    if let Some((b, t)) = baseline.iter().zip(treatment).find(|(b, t)| b.plot_id != t.plot_id) {
        return Err(invalid(format!(
            "report pairing mismatch: {} vs {}",
            b.plot_id, t.plot_id
        )));
    }
    let mut out = Vec::with_capacity(9);
    for group in REPORT_GROUPS {
        for metric in Metric::ALL {
            let deltas: Vec<f64> = baseline
                .iter()
                .zip(treatment)
                .filter_map(|(b, t)| Some(metric.value(t.group(group))? - metric.value(b.group(group))?))
                .collect();
            let n = deltas.len();
            let mean = if n == 0 {
                0.0
            } else {
                deltas.iter().sum::<f64>() / n as f64
            };
            let mse = if n < 2 {
                0.0
            } else {
                deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64
            };
            out.push(MetricDelta {
                group,
                metric,
                samples: n,
                mean_delta: mean,
                mse,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn stem(x: f64, y: f64, h: f64, class: CrownClass) -> StemRecord {
        StemRecord {
            plot_id: "p".into(),
            x,
            y,
            height_m: h,
            crown_class: class,
            live: true,
        }
    }

    fn tree(id: u32, x: f64, y: f64, z: f64) -> DetectedTree {
        DetectedTree { id, x, y, z }
    }

    #[test]
    fn score_examples() {
        let tol = MatchTolerances::default();
        let s = stem(0.0, 0.0, 20.0, CrownClass::Dominant);
        assert_eq!(pair_score((0.0, 0.0, 20.0), &s, &tol).unwrap(), Some(2.0));
        // atan(5.359 / 20) is just past 15 degrees
        assert_eq!(pair_score((5.359, 0.0, 20.0), &s, &tol).unwrap(), None);
        assert!(pair_score((5.3, 0.0, 20.0), &s, &tol).unwrap().is_some());
        assert_eq!(pair_score((0.0, 0.0, 26.1), &s, &tol).unwrap(), None);
        let bad = stem(0.0, 0.0, 0.0, CrownClass::Dominant);
        assert!(pair_score((0.0, 0.0, 20.0), &bad, &tol).is_err());
    }

    #[test]
    fn metric_example() {
        let m = GroupMetrics::from_counts(9, 1, 2);
        assert_eq!(m.recall, 0.9);
        assert!((m.precision - 9.0 / 11.0).abs() < 1e-15);
        assert!((m.f_score - 0.857_142_857_142_857_1).abs() < 1e-12);
        let z = GroupMetrics::from_counts(0, 0, 0);
        assert_eq!((z.recall, z.precision, z.f_score), (0.0, 0.0, 0.0));
    }

    #[test]
    fn class_groups() {
        assert_eq!(CrownClass::parse("codominant").unwrap().group(), StoryGroup::OverStory);
        assert_eq!(CrownClass::parse("Co-dominant").unwrap(), CrownClass::Codominant);
        assert_eq!(CrownClass::Overtopped.group(), StoryGroup::UnderStory);
        assert!(CrownClass::parse("snag").is_none());
    }

    #[test]
    fn perfect_plot() {
        let stems = vec![
            stem(0.0, 0.0, 20.0, CrownClass::Dominant),
            stem(5.0, 0.0, 10.0, CrownClass::Intermediate),
        ];
        let crowns = vec![tree(1, 0.0, 0.0, 20.0), tree(2, 5.0, 0.0, 10.0)];
        let r = evaluate_plot("p", &crowns, &stems, &PlotSpec::new(0.0, 0.0), &Default::default()).unwrap();
        assert_eq!((r.all.recall, r.all.precision, r.all.f_score), (1.0, 1.0, 1.0));
        assert_eq!(r.over_story.mt, 1);
        assert_eq!(r.under_story.mt, 1);
    }

    #[test]
    fn buffer_ring_crowns_never_commit() {
        let stems = vec![stem(0.0, 0.0, 20.0, CrownClass::Dominant)];
        let crowns = vec![
            tree(1, 0.0, 0.0, 20.0),
            tree(2, 13.0, 0.0, 20.0), // buffer ring
            tree(3, 30.0, 0.0, 20.0), // outside
            tree(4, 8.0, 0.0, 20.0),  // core, unmatched
        ];
        let r = evaluate_plot("p", &crowns, &stems, &PlotSpec::new(0.0, 0.0), &Default::default()).unwrap();
        assert_eq!((r.all.mt, r.all.oe, r.all.ce), (1, 0, 1));
        assert_eq!(r.over_story.ce, 1);
    }

    #[test]
    fn buffer_crown_may_match_a_stem_near_the_edge() {
        let stems = vec![stem(11.0, 0.0, 20.0, CrownClass::Codominant)];
        let crowns = vec![tree(7, 12.0, 0.0, 20.0)];
        let r = evaluate_plot("p", &crowns, &stems, &PlotSpec::new(0.0, 0.0), &Default::default()).unwrap();
        assert_eq!(r.all.mt, 1);
        assert_eq!(r.pairs[0].crown_id, 7);
    }

    #[test]
    fn stem_outside_plot_is_rejected() {
        let stems = vec![stem(12.0, 0.0, 20.0, CrownClass::Dominant)];
        assert!(evaluate_plot("p", &[], &stems, &PlotSpec::new(0.0, 0.0), &Default::default()).is_err());
    }

    #[test]
    fn commission_without_stems_counts_overall_only() {
        let crowns = vec![tree(1, 1.0, 1.0, 15.0)];
        let r = evaluate_plot("p", &crowns, &[], &PlotSpec::new(0.0, 0.0), &Default::default()).unwrap();
        assert_eq!(r.all.ce, 1);
        assert_eq!(r.over_story.ce + r.under_story.ce, 0);
    }

    #[test]
    fn aggregate_examples() {
        let mk = |mt, oe, ce| MatchReport {
            plot_id: "p".into(),
            pairs: vec![],
            over_story: GroupMetrics::from_counts(mt, oe, ce),
            under_story: GroupMetrics::from_counts(0, 0, 0),
            all: GroupMetrics::from_counts(mt, oe, ce),
        };
        let a = mk(8, 2, 2); // F 0.8
        let b = mk(9, 1, 1); // F 0.9
        let s = aggregate_reports(&[a.clone(), b.clone()]).unwrap();
        let f = s.mean(None, Metric::FScore).unwrap();
        assert!((f.mean - 0.85).abs() < 1e-12);
        assert_eq!(f.samples, 2);
        assert_eq!(s.mean(Some(StoryGroup::UnderStory), Metric::Recall).unwrap().samples, 0);
        assert!(aggregate_reports(&[]).is_err());
        let d = paired_deltas(&[a.clone(), b.clone()], &[a, b]).unwrap();
        assert!(d.iter().all(|d| d.mean_delta == 0.0 && d.mse == 0.0));
    }

    proptest! {
        #[test]
        fn metric_identities(mt in 0usize..500, oe in 0usize..500, ce in 0usize..500) {
            let m = GroupMetrics::from_counts(mt, oe, ce);
            if mt + oe > 0 {
                prop_assert!((m.recall * (mt + oe) as f64 - mt as f64).abs() < 1e-9);
            }
            if mt + ce > 0 {
                prop_assert!((m.precision * (mt + ce) as f64 - mt as f64).abs() < 1e-9);
            }
            if m.recall + m.precision > 0.0 {
                let h = 2.0 / (1.0 / m.recall + 1.0 / m.precision);
                prop_assert!((m.f_score - h).abs() < 1e-12);
            }
            prop_assert!((0.0..=1.0).contains(&m.f_score));
        }

        #[test]
        fn score_is_monotone(dh1 in 0.0f64..0.35, dh2 in 0.0f64..0.35, off1 in 0.0f64..7.0, off2 in 0.0f64..7.0) {
            let tol = MatchTolerances::default();
            let s = stem(0.0, 0.0, 20.0, CrownClass::Dominant);
            let (dh_lo, dh_hi) = if dh1 <= dh2 { (dh1, dh2) } else { (dh2, dh1) };
            let (o_lo, o_hi) = if off1 <= off2 { (off1, off2) } else { (off2, off1) };
            // same apex height, so lean grows with offset only
            let z = 20.0 * (1.0 + dh_hi);
            let worse = pair_score((o_hi, 0.0, z), &s, &tol).unwrap().unwrap_or(0.0);
            let better = pair_score((o_lo, 0.0, z), &s, &tol).unwrap().unwrap_or(0.0);
            prop_assert!(better >= worse);
            let zl = 20.0 * (1.0 + dh_lo);
            // lower height error at a lean that does not exceed the other's
            let lean_equal_offset = o_hi * zl / z;
            let better_h = pair_score((lean_equal_offset, 0.0, zl), &s, &tol).unwrap().unwrap_or(0.0);
            prop_assert!(better_h + 1e-12 >= worse);
        }

        #[test]
        fn crown_order_does_not_change_counts(
            seed in 0u64..1000,
            n_stems in 0usize..6,
            n_crowns in 0usize..8,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let stems: Vec<StemRecord> = (0..n_stems)
                .map(|_| {
                    let class = if rng.random_bool(0.5) { CrownClass::Dominant } else { CrownClass::Overtopped };
                    stem(rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0), rng.random_range(5.0..30.0), class)
                })
                .collect();
            let crowns: Vec<DetectedTree> = (0..n_crowns)
                .map(|i| tree(i as u32 + 1, rng.random_range(-14.0..14.0), rng.random_range(-14.0..14.0), rng.random_range(5.0..30.0)))
                .collect();
            let mut shuffled = crowns.clone();
            shuffled.reverse();
            let plot = PlotSpec::new(0.0, 0.0);
            let a = evaluate_plot("p", &crowns, &stems, &plot, &Default::default()).unwrap();
            let b = evaluate_plot("p", &shuffled, &stems, &plot, &Default::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
