//! Report tables and documents. Every writer sorts its rows and prints
//! numbers through [`crate::format`], so identical inputs give identical
//! bytes.

use std::io::{Read, Write};

use canopy_strata_core::eval::{
    group_label, AggregateSummary, DetectedTree, GroupMetrics, MatchReport, MetricDelta, REPORT_GROUPS,
};
use canopy_strata_core::segment::{Crown, LayerReport};
use canopy_strata_core::stratify::CanopyLayer;
use serde_json::{json, Value};

use crate::error::{from_csv, Error, Result};
use crate::format::{fixed3, round6, sig6};
use crate::points::{column, parse_real};

/// One row of the layer statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub layer: usize,
    pub point_count: usize,
    pub density_pt_m2: f64,
    pub afp_m: f64,
    pub starting_height_m: f64,
    pub thickness_m: f64,
    pub ground_vegetation: bool,
    /// Only known after segmentation.
    pub crown_count: Option<usize>,
}

impl From<&CanopyLayer> for LayerRow {
    fn from(l: &CanopyLayer) -> Self {
        Self {
            layer: l.index,
            point_count: l.summary.point_count,
            density_pt_m2: l.summary.density_pt_m2,
            afp_m: l.afp_m,
            starting_height_m: l.summary.starting_height_m,
            thickness_m: l.summary.thickness_m,
            ground_vegetation: l.ground_vegetation,
            crown_count: None,
        }
    }
}

impl From<&LayerReport> for LayerRow {
    fn from(l: &LayerReport) -> Self {
        Self {
            layer: l.index,
            point_count: l.summary.point_count,
            density_pt_m2: l.summary.density_pt_m2,
            afp_m: l.afp_m,
            starting_height_m: l.summary.starting_height_m,
            thickness_m: l.summary.thickness_m,
            ground_vegetation: l.ground_vegetation,
            crown_count: Some(l.crown_count),
        }
    }
}

pub fn write_layer_stats<W: Write>(writer: W, rows: &[LayerRow]) -> csv::Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.layer);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "layer",
        "point_count",
        "density_pt_m2",
        "afp_m",
        "starting_height_m",
        "thickness_m",
        "ground_vegetation",
        "crown_count",
    ])?;
    for r in &rows {
        w.write_record([
            r.layer.to_string(),
            r.point_count.to_string(),
            sig6(r.density_pt_m2),
            sig6(r.afp_m),
            sig6(r.starting_height_m),
            sig6(r.thickness_m),
            r.ground_vegetation.to_string(),
            r.crown_count.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const CROWN_COLUMNS: [&str; 8] = [
    "crown_id",
    "layer",
    "apex_x",
    "apex_y",
    "apex_z",
    "footprint_area_m2",
    "avg_width_m",
    "point_count",
];

pub fn write_crowns<W: Write>(writer: W, crowns: &[Crown]) -> csv::Result<()> {
    let mut order: Vec<&Crown> = crowns.iter().collect();
    order.sort_by_key(|c| c.id);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CROWN_COLUMNS)?;
    for c in order {
        w.write_record([
            c.id.to_string(),
            c.layer_index.to_string(),
            fixed3(c.apex.x),
            fixed3(c.apex.y),
            sig6(c.apex.z),
            sig6(c.footprint_area_m2),
            sig6(c.avg_width_m),
            c.member_point_ids.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the apexes of a crown table (`crown_id`, `apex_x`, `apex_y`,
/// `apex_z`; other columns are ignored).
pub fn read_crowns<R: Read>(reader: R, origin: &str) -> Result<Vec<DetectedTree>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| from_csv(origin, e))?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(["crown_id", "apex_x", "apex_y", "apex_z"]) {
        *slot =
            column(&headers, name).ok_or_else(|| Error::schema(origin, format!("missing required column '{name}'")))?;
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| from_csv(origin, e))? {
        let line = record.position().map_or(0, |p| p.line());
        let id: u32 = record[idx[0]]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("crown_id: '{}' is not an id", &record[idx[0]])))?;
        out.push(DetectedTree {
            id,
            x: parse_real(origin, line, "apex_x", &record[idx[1]])?,
            y: parse_real(origin, line, "apex_y", &record[idx[2]])?,
            z: parse_real(origin, line, "apex_z", &record[idx[3]])?,
        });
    }
    Ok(out)
}

/// `point_index,crown_id` for every input point; the crown id is empty for
/// ground, noise and unassigned points.
pub fn write_assignments<W: Write>(writer: W, assignments: &[Option<u32>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point_index", "crown_id"])?;
    for (i, a) in assignments.iter().enumerate() {
        w.write_record([i.to_string(), a.map(|c| c.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

fn group_json(m: &GroupMetrics) -> Value {
    json!({
        "mt": m.mt,
        "oe": m.oe,
        "ce": m.ce,
        "recall": round6(m.recall),
        "precision": round6(m.precision),
        "f_score": round6(m.f_score),
    })
}

/// One plot's match report as a JSON document.
pub fn match_report_json(report: &MatchReport) -> Value {
    let mut pairs = report.pairs.clone();
    pairs.sort_by_key(|p| (p.stem_index, p.crown_id));
    let pairs: Vec<Value> = pairs
        .iter()
        .map(|p| json!({ "stem_index": p.stem_index, "crown_id": p.crown_id, "score": round6(p.score) }))
        .collect();
    let mut groups = serde_json::Map::new();
    for g in REPORT_GROUPS {
        groups.insert(group_label(g).into(), group_json(report.group(g)));
    }
    json!({ "plot_id": report.plot_id, "pairs": pairs, "groups": groups })
}

pub fn to_pretty_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Per-plot counts and metrics, one row per (mode, plot, group).
pub fn write_plot_metrics<W: Write>(writer: W, runs: &[(&str, &[MatchReport])]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "mode",
        "plot_id",
        "group",
        "mt",
        "oe",
        "ce",
        "recall",
        "precision",
        "f_score",
    ])?;
    for (mode, reports) in runs {
        let mut order: Vec<&MatchReport> = reports.iter().collect();
        order.sort_by(|a, b| a.plot_id.cmp(&b.plot_id));
        for r in order {
            for g in REPORT_GROUPS {
                let m = r.group(g);
                w.write_record([
                    mode.to_string(),
                    r.plot_id.clone(),
                    group_label(g).to_string(),
                    m.mt.to_string(),
                    m.oe.to_string(),
                    m.ce.to_string(),
                    sig6(m.recall),
                    sig6(m.precision),
                    sig6(m.f_score),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate<W: Write>(writer: W, summary: &AggregateSummary) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "metric", "mean", "samples", "plots"])?;
    for m in &summary.means {
        w.write_record([
            group_label(m.group).to_string(),
            m.metric.as_str().to_string(),
            sig6(m.mean),
            m.samples.to_string(),
            summary.plots.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Side-by-side means of both modes with the paired deltas.
pub fn write_comparison<W: Write>(
    writer: W,
    baseline: &AggregateSummary,
    stratified: &AggregateSummary,
    deltas: &[MetricDelta],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "metric",
        "baseline",
        "stratified",
        "mean_delta",
        "delta_mse",
        "paired_plots",
    ])?;
    for d in deltas {
        let mean = |s: &AggregateSummary| s.mean(d.group, d.metric).map_or(0.0, |m| m.mean);
        w.write_record([
            group_label(d.group).to_string(),
            d.metric.as_str().to_string(),
            sig6(mean(baseline)),
            sig6(mean(stratified)),
            sig6(d.mean_delta),
            sig6(d.mse),
            d.samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text comparison summary for the terminal.
pub fn comparison_text(baseline: &AggregateSummary, stratified: &AggregateSummary, deltas: &[MetricDelta]) -> String {
    let mut s = format!(
        "{:<12} {:<10} {:>10} {:>10} {:>10} {:>10}\n",
        "group", "metric", "baseline", "stratified", "delta", "mse"
    );
    for d in deltas {
        let mean = |a: &AggregateSummary| a.mean(d.group, d.metric).map_or(0.0, |m| m.mean);
        s.push_str(&format!(
            "{:<12} {:<10} {:>10} {:>10} {:>10} {:>10}\n",
            group_label(d.group),
            d.metric.as_str(),
            sig6(mean(baseline)),
            sig6(mean(stratified)),
            sig6(d.mean_delta),
            sig6(d.mse),
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use canopy_strata_core::eval::aggregate_reports;
    use canopy_strata_core::segment::Apex;

    fn csv_string(f: impl FnOnce(&mut Vec<u8>)) -> String {
        let mut buf = Vec::new();
        f(&mut buf);
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_crown_list_is_header_only() {
        let s = csv_string(|b| write_crowns(b, &[]).unwrap());
        assert_eq!(
            s,
            "crown_id,layer,apex_x,apex_y,apex_z,footprint_area_m2,avg_width_m,point_count\n"
        );
    }

    #[test]
    fn crowns_round_trip_to_apexes() {
        let c = Crown {
            id: 3,
            layer_index: 1,
            apex: Apex {
                x: 10.12345,
                y: 20.0,
                z: 18.123456789,
            },
            member_point_ids: vec![0, 4],
            footprint_area_m2: 12.5,
            avg_width_m: 3.98942,
        };
        let s = csv_string(|b| write_crowns(b, &[c]).unwrap());
        assert!(s.ends_with("3,1,10.123,20.000,18.1235,12.5,3.98942,2\n"), "{s}");
        let back = read_crowns(s.as_bytes(), "t").unwrap();
        assert_eq!(back[0].id, 3);
        assert_eq!(back[0].z, 18.1235);
    }

    #[test]
    fn layer_rows_follow_layer_order() {
        let row = |layer| LayerRow {
            layer,
            point_count: 10,
            density_pt_m2: 2.0,
            afp_m: 1.0 / 2f64.sqrt(),
            starting_height_m: 1.0,
            thickness_m: 2.0,
            ground_vegetation: false,
            crown_count: None,
        };
        let s = csv_string(|b| write_layer_stats(b, &[row(2), row(1)]).unwrap());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,10,2,0.707107,1,2,false,"));
    }

    #[test]
    fn report_json_and_aggregate() {
        let r = MatchReport {
            plot_id: "p".into(),
            pairs: vec![],
            over_story: GroupMetrics::from_counts(9, 1, 2),
            under_story: GroupMetrics::from_counts(0, 0, 0),
            all: GroupMetrics::from_counts(9, 1, 2),
        };
        let v = match_report_json(&r);
        assert_eq!(v["groups"]["all"]["f_score"], json!(0.857143));
        assert_eq!(v["groups"]["over-story"]["precision"], json!(0.818182));
        let agg = aggregate_reports(&[r]).unwrap();
        let s = csv_string(|b| write_aggregate(b, &agg).unwrap());
        assert!(s.contains("all,f-score,0.857143,1,1\n"));
        assert!(s.contains("under-story,recall,0,0,1\n"));
    }
}
