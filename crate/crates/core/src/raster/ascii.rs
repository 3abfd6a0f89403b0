//! ESRI ASCII grid reader/writer.
//!
//! Header keys `ncols`, `nrows`, `xllcorner`/`xllcenter`,
//! `yllcorner`/`yllcenter`, `cellsize`, `NODATA_value` (case-insensitive),
//! followed by row-major values with the northern row first.

use std::fmt::Write as _;
use std::path::Path;

use super::{GeoTransform, Raster, RasterKind};
use crate::error::{Error, Result};

const DEFAULT_NODATA: f64 = -9999.0;

pub fn read_ascii_grid(text: &str, kind: RasterKind) -> Result<Raster> {
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
        let value = parts.next().ok_or_else(|| Error::parse(i + 1, format!("header {key} has no value")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("header {key}: bad number {value:?}")))?;
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(as_count(num, i + 1)?),
            "nrows" => nrows = Some(as_count(num, i + 1)?),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                centered.0 = true;
            }
            "yllcenter" => {
                yll = Some(num);
                centered.1 = true;
            }
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = num,
            other => return Err(Error::parse(i + 1, format!("unknown header key {other:?}"))),
        }
        lines.next();
    }

    let missing = |k: &str| Error::parse(0, format!("missing header key {k}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    if centered.0 {
        xll -= cellsize / 2.0;
    }
    if centered.1 {
        yll -= cellsize / 2.0;
    }

    let mut values = Vec::with_capacity(ncols * nrows);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::parse(i + 1, format!("bad value {tok:?}")))?;
            values.push(v);
        }
    }
    if values.len() != ncols * nrows {
        return Err(Error::Shape(format!(
            "grid declares {ncols}x{nrows} but holds {} values",
            values.len()
        )));
    }
    let origin_lat = round_deg(yll + nrows as f64 * cellsize);
    let transform = GeoTransform::new(xll, origin_lat, cellsize, cellsize)?;
    Raster::new(ncols, nrows, transform, kind, nodata, values)
}

/// Corner coordinates are kept to 1e-10 degrees so that the
/// lower-left/upper-left conversion is stable across read/write cycles.
fn round_deg(v: f64) -> f64 {
    (v * 1e10).round() / 1e10
}

fn as_count(v: f64, line: usize) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::parse(line, format!("{v} is not a positive integer")))
    }
}

pub fn read_ascii_grid_file(path: impl AsRef<Path>, kind: RasterKind) -> Result<Raster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    read_ascii_grid(&text, kind)
}

/// Serialize a raster. Header coordinates use the shortest round-trip
/// representation; cell values use 6 significant digits.
pub fn write_ascii_grid(raster: &Raster) -> Result<String> {
    let t = raster.transform();
    if t.pixel_width != t.pixel_height {
        return Err(Error::Shape("ESRI ASCII grids need square cells".into()));
    }
    let yll = round_deg(t.origin_lat - raster.height() as f64 * t.pixel_height);
    let mut out = String::with_capacity(raster.values().len() * 6 + 128);
    writeln!(out, "ncols {}", raster.width()).unwrap();
    writeln!(out, "nrows {}", raster.height()).unwrap();
    writeln!(out, "xllcorner {}", t.origin_lon).unwrap();
    writeln!(out, "yllcorner {yll}").unwrap();
    writeln!(out, "cellsize {}", t.pixel_width).unwrap();
    writeln!(out, "NODATA_value {}", format_g6(raster.nodata())).unwrap();
    for row in raster.values().chunks(raster.width()) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            out.push_str(&format_g6(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_ascii_grid_file(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_ascii_grid(raster)?)?;
    Ok(())
}

/// Format like C's `%g`: 6 significant digits, trailing zeros removed,
/// scientific notation outside 1e-4..1e6.
pub fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        strip_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mant.to_string()), exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
