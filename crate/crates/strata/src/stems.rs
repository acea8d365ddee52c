//! Stem-map files: `plot_id,x,y,height_m,crown_class,live_flag`.

use std::io::{Read, Write};

use canopy_strata_core::eval::{CrownClass, StemRecord};

use crate::error::{from_csv, Error, Result};
use crate::points::{column, parse_real};

pub const STEM_COLUMNS: [&str; 6] = ["plot_id", "x", "y", "height_m", "crown_class", "live_flag"];

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "live" => Some(true),
        "0" | "false" | "no" | "n" | "dead" => Some(false),
        _ => None,
    }
}

/// Reads and validates a stem map: heights must be positive and crown
/// classes known. Row order is preserved.
pub fn read_stems<R: Read>(reader: R, origin: &str) -> Result<Vec<StemRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| from_csv(origin, e))?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(STEM_COLUMNS) {
        *slot =
            column(&headers, name).ok_or_else(|| Error::schema(origin, format!("missing required column '{name}'")))?;
    }
    let [pi, xi, yi, hi, ci, li] = idx;
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| from_csv(origin, e))? {
        let line = record.position().map_or(0, |p| p.line());
        let plot_id = record[pi].to_string();
        if plot_id.is_empty() {
            return Err(Error::parse(origin, line, "empty plot_id"));
        }
        let height_m = parse_real(origin, line, "height_m", &record[hi])?;
        if height_m <= 0.0 {
            return Err(Error::parse(
                origin,
                line,
                format!("height_m must be positive, got {height_m}"),
            ));
        }
        let crown_class = CrownClass::parse(&record[ci])
            .ok_or_else(|| Error::schema(origin, format!("line {line}: unknown crown class '{}'", &record[ci])))?;
        let live = parse_flag(&record[li])
            .ok_or_else(|| Error::parse(origin, line, format!("live_flag: '{}' is not a boolean", &record[li])))?;
        out.push(StemRecord {
            plot_id,
            x: parse_real(origin, line, "x", &record[xi])?,
            y: parse_real(origin, line, "y", &record[yi])?,
            height_m,
            crown_class,
            live,
        });
    }
    Ok(out)
}

pub fn write_stems<W: Write>(writer: W, stems: &[StemRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STEM_COLUMNS)?;
    for s in stems {
        w.write_record([
            s.plot_id.clone(),
            s.x.to_string(),
            s.y.to_string(),
            s.height_m.to_string(),
            s.crown_class.as_str().to_string(),
            u8::from(s.live).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
