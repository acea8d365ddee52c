//! Synthetic comparison of the pipeline with and without stratification.

use alloc::format;
use alloc::vec::Vec;

use crate::config::PipelineConfig;
use crate::error::{invalid, Result};
use crate::eval::{
    aggregate_reports, evaluate_plot, paired_deltas, AggregateSummary, DetectedTree, MatchReport, MatchTolerances,
    MetricDelta, PlotSpec, StemRecord,
};
use crate::model::Bounds;
use crate::segment::{segment_trees, SegmentationResult};
use crate::synth::{simulate, StandSpec};

/// Plot centers on a regular grid whose buffered discs fit inside the
/// extent; the extent center alone when none fits.
pub fn plot_centers(extent: &Bounds, radius_m: f64, buffer_m: f64) -> Vec<(f64, f64)> {
    let reach = radius_m + buffer_m;
    let step = 2.0 * reach;
    let fit = |len: f64| {
        if len < step {
            0
        } else {
            libm::floor(len / step) as usize
        }
    };
    let (nx, ny) = (fit(extent.width()), fit(extent.height()));
    if nx == 0 || ny == 0 {
        return alloc::vec![extent.center()];
    }
    // center the block of plots in the extent
    let x0 = extent.min_x + 0.5 * (extent.width() - nx as f64 * step) + reach;
    let y0 = extent.min_y + 0.5 * (extent.height() - ny as f64 * step) + reach;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push((x0 + i as f64 * step, y0 + j as f64 * step));
        }
    }
    out
}

/// Evaluates a segmentation against the stems falling inside each plot.
/// Plot ids are `<prefix>-<index>`.
pub fn evaluate_plots(
    prefix: &str,
    seg: &SegmentationResult,
    stems: &[StemRecord],
    plots: &[PlotSpec],
    tol: &MatchTolerances,
) -> Result<Vec<MatchReport>> {
    let detected: Vec<DetectedTree> = seg.crowns.iter().map(DetectedTree::from).collect();
    plots
        .iter()
        .enumerate()
        .map(|(i, plot)| {
            let inside: Vec<StemRecord> = stems
                .iter()
                .filter(|s| libm::hypot(s.x - plot.center_x, s.y - plot.center_y) <= plot.radius_m)
                .cloned()
                .collect();
            evaluate_plot(&format!("{prefix}-{i}"), &detected, &inside, plot, tol)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    /// Surface-only runs (stratification disabled).
    pub baseline_reports: Vec<MatchReport>,
    pub stratified_reports: Vec<MatchReport>,
    pub baseline: AggregateSummary,
    pub stratified: AggregateSummary,
    /// `stratified - baseline`, paired by plot.
    pub deltas: Vec<MetricDelta>,
}

/// Simulates one stand per seed, segments it in both modes and evaluates
/// every plot of the stand.
pub fn compare_modes(spec: &StandSpec, seeds: &[u64], config: &PipelineConfig) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(invalid("comparison needs at least one seed"));
    }
    let tol = MatchTolerances::from_config(config);
    let plots: Vec<PlotSpec> = plot_centers(&spec.extent, config.plot_radius_m, config.plot_buffer_m)
        .into_iter()
        .map(|(x, y)| PlotSpec::with_config(x, y, config))
        .collect();
    let on = PipelineConfig {
        stratification_enabled: true,
        ..config.clone()
    };
    let off = PipelineConfig {
        stratification_enabled: false,
        ..config.clone()
    };
    let mut baseline_reports = Vec::new();
    let mut stratified_reports = Vec::new();
    for &seed in seeds {
        let (_, sim) = simulate(spec, seed)?;
        let prefix = format!("seed{seed}");
        let base = segment_trees(&sim.cloud, None, &off)?;
        baseline_reports.extend(evaluate_plots(&prefix, &base, &sim.stems, &plots, &tol)?);
        let strat = segment_trees(&sim.cloud, None, &on)?;
        stratified_reports.extend(evaluate_plots(&prefix, &strat, &sim.stems, &plots, &tol)?);
    }
    Ok(Comparison {
        seeds: seeds.to_vec(),
        baseline: aggregate_reports(&baseline_reports)?,
        stratified: aggregate_reports(&stratified_reports)?,
        deltas: paired_deltas(&baseline_reports, &stratified_reports)?,
        baseline_reports,
        stratified_reports,
    })
}
