//! ESRI ASCII grids for DEMs. Rows are written north first; the core
//! rasters index row 0 as the southernmost row.

use std::io::{Read, Write};

use canopy_strata_core::{GridGeometry, Raster};

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

pub fn read_ascii_grid<R: Read>(mut reader: R, origin: &str) -> Result<Raster> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::io(origin, e))?;
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut centered = (false, false);
    let mut cellsize = None;
    let mut nodata = DEFAULT_NODATA;
    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(i, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let lineno = i as u64 + 1;
        let value = parts
            .next()
            .ok_or_else(|| Error::parse(origin, lineno, format!("header '{key}' has no value")))?;
        let real = |v: &str| crate::points::parse_real(origin, lineno, key, v);
        let count = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::parse(origin, lineno, format!("{key}: '{v}' is not a count")))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(count(value)?),
            "nrows" => nrows = Some(count(value)?),
            "xllcorner" => xll = Some(real(value)?),
            "yllcorner" => yll = Some(real(value)?),
            "xllcenter" => {
                xll = Some(real(value)?);
                centered.0 = true;
            }
            "yllcenter" => {
                yll = Some(real(value)?);
                centered.1 = true;
            }
            "cellsize" => cellsize = Some(real(value)?),
            "nodata_value" => nodata = real(value)?,
            _ => return Err(Error::parse(origin, lineno, format!("unknown header key '{key}'"))),
        }
        lines.next();
    }
    let missing = |name: &str| Error::schema(origin, format!("missing header '{name}'"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cell_size = cellsize.ok_or_else(|| missing("cellsize"))?;
    let mut origin_x = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut origin_y = yll.ok_or_else(|| missing("yllcorner"))?;
    if ncols == 0 || nrows == 0 || cell_size.is_nan() || cell_size <= 0.0 {
        return Err(Error::schema(origin, "grid must have positive size and cell size"));
    }
    if centered.0 {
        origin_x -= 0.5 * cell_size;
    }
    if centered.1 {
        origin_y -= 0.5 * cell_size;
    }
    let geometry = GridGeometry {
        origin_x,
        origin_y,
        cell_size,
        ncols,
        nrows,
    };
    let mut raster = Raster::new_void(geometry);
    let mut read = 0usize;
    for (i, line) in lines {
        for token in line.split_whitespace() {
            if read == ncols * nrows {
                return Err(Error::parse(origin, i as u64 + 1, "more values than ncols x nrows"));
            }
            let v = crate::points::parse_real(origin, i as u64 + 1, "value", token)?;
            let (col, north_row) = (read % ncols, read / ncols);
            if v != nodata {
                raster.set(col, nrows - 1 - north_row, Some(v));
            }
            read += 1;
        }
    }
    if read != ncols * nrows {
        return Err(Error::schema(
            origin,
            format!("expected {} values, found {read}", ncols * nrows),
        ));
    }
    Ok(raster)
}

/// Writes a grid with a corner-registered header; void cells become
/// `NODATA_value`.
pub fn write_ascii_grid<W: Write>(mut w: W, raster: &Raster) -> std::io::Result<()> {
    let g = &raster.geometry;
    writeln!(w, "ncols {}", g.ncols)?;
    writeln!(w, "nrows {}", g.nrows)?;
    writeln!(w, "xllcorner {}", g.origin_x)?;
    writeln!(w, "yllcorner {}", g.origin_y)?;
    writeln!(w, "cellsize {}", g.cell_size)?;
    writeln!(w, "NODATA_value {DEFAULT_NODATA}")?;
    for row in (0..g.nrows).rev() {
        let line: Vec<String> = (0..g.ncols)
            .map(|col| raster.get(col, row).unwrap_or(DEFAULT_NODATA).to_string())
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}
