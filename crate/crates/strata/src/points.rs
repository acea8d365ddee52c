//! Delimited point files: `x,y,z[,class][,source_id]` with a header row.
//! Columns are matched by name, case-insensitively; unknown columns are
//! ignored. Class 2 marks ground returns.

use std::io::{Read, Write};

use canopy_strata_core::{Point, PointCloud};

use crate::error::{from_csv, Error, Result};

/// Class code written for returns that are not ground.
pub const CLASS_UNCLASSIFIED: u8 = 1;
pub const CLASS_GROUND: u8 = 2;

pub(crate) fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

pub(crate) fn parse_real(origin: &str, line: u64, name: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(origin, line, format!("{name}: '{raw}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(origin, line, format!("{name}: '{raw}' is not finite")));
    }
    Ok(v)
}

/// Reads a point file. The cloud area is `area_m2` when given, otherwise the
/// bounding box area.
pub fn read_points<R: Read>(reader: R, origin: &str, area_m2: Option<f64>) -> Result<PointCloud> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| from_csv(origin, e))?.clone();
    let required = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::schema(origin, format!("missing required column '{name}'")))
    };
    let (xi, yi, zi) = (required("x")?, required("y")?, required("z")?);
    let class_i = column(&headers, "class");
    let source_i = column(&headers, "source_id");

    let mut points = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| from_csv(origin, e))? {
        let line = record.position().map_or(0, |p| p.line());
        let x = parse_real(origin, line, "x", &record[xi])?;
        let y = parse_real(origin, line, "y", &record[yi])?;
        let z = parse_real(origin, line, "z", &record[zi])?;
        let mut p = Point::new(x, y, z);
        if let Some(raw) = class_i.map(|i| &record[i]).filter(|s| !s.is_empty()) {
            let class: u8 = raw
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("class: '{raw}' is not a class code")))?;
            p.ground = class == CLASS_GROUND;
        }
        if let Some(raw) = source_i.map(|i| &record[i]).filter(|s| !s.is_empty()) {
            let id: u32 = raw
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("source_id: '{raw}' is not an id")))?;
            p.source_id = Some(id);
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::schema(origin, "no points"));
    }
    let cloud = match area_m2 {
        Some(a) => PointCloud::new(points, a)?,
        None => PointCloud::with_bbox_area(points)?,
    };
    Ok(cloud)
}

/// Writes `x,y,z,class,source_id` rows in the given order. Coordinates use
/// the shortest representation that reads back to the same value.
pub fn write_points<W: Write>(writer: W, points: &[Point]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y", "z", "class", "source_id"])?;
    for p in points {
        let class = if p.ground { CLASS_GROUND } else { CLASS_UNCLASSIFIED };
        let source = p.source_id.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            p.x.to_string(),
            p.y.to_string(),
            p.z.to_string(),
            class.to_string(),
            source,
        ])?;
    }
    w.flush()?;
    Ok(())
}
