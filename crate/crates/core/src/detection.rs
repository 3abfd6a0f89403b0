//! Detection records: per-chip model output parsing, georeferencing, and
//! the backscatter statistic used by the noise gate.
//!
//! A chip detection file holds one record per line,
//! `class_id cx cy w h confidence`, with box geometry normalized to the
//! 640 px chip. Class ids: 0 single platform, 1 platform cluster,
//! 2 wind turbine.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::error::{Error, Result};
use crate::geojson::Feature;
use crate::geom::GeoBox;
use crate::quarter::Quarter;
use crate::raster::{ChipWindow, Raster, RasterKind, Tile, CHIP_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    SinglePlatform,
    PlatformCluster,
    WindTurbine,
}

impl DetectionClass {
    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(DetectionClass::SinglePlatform),
            1 => Some(DetectionClass::PlatformCluster),
            2 => Some(DetectionClass::WindTurbine),
            _ => None,
        }
    }

    pub fn id(self) -> u32 {
        match self {
            DetectionClass::SinglePlatform => 0,
            DetectionClass::PlatformCluster => 1,
            DetectionClass::WindTurbine => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectionClass::SinglePlatform => "single_platform",
            DetectionClass::PlatformCluster => "platform_cluster",
            DetectionClass::WindTurbine => "wind_turbine",
        }
    }
}

impl fmt::Display for DetectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectionClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_platform" => Ok(DetectionClass::SinglePlatform),
            "platform_cluster" => Ok(DetectionClass::PlatformCluster),
            "wind_turbine" => Ok(DetectionClass::WindTurbine),
            other => Err(Error::InvalidValue(format!("unknown detection class {other:?}"))),
        }
    }
}

/// One georeferenced model detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: String,
    pub quarter: Quarter,
    pub tile_id: String,
    pub class: DetectionClass,
    pub confidence: f64,
    pub bbox: GeoBox,
    /// Highest 8-bit composite level inside the box; 0 until attached.
    pub max_level: u8,
}

impl Detection {
    pub fn to_feature(&self) -> Feature {
        let mut p = Map::new();
        p.insert("id".into(), json!(self.id));
        p.insert("quarter".into(), json!(self.quarter.to_string()));
        p.insert("tile_id".into(), json!(self.tile_id));
        p.insert("class".into(), json!(self.class.name()));
        p.insert("confidence".into(), json!(self.confidence));
        p.insert("max_level".into(), json!(self.max_level));
        Feature::boxed(&self.bbox, p)
    }

    pub fn from_feature(f: &Feature) -> Result<Self> {
        let confidence = f.require_f64("confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidValue(format!("confidence {confidence} outside [0, 1]")));
        }
        let level = f.require_f64("max_level")?;
        if !(0.0..=255.0).contains(&level) || level.fract() != 0.0 {
            return Err(Error::InvalidValue(format!("max_level {level} is not an 8-bit level")));
        }
        Ok(Detection {
            id: f.require_str("id")?.to_string(),
            quarter: f.require_str("quarter")?.parse()?,
            tile_id: f.str_prop("tile_id").unwrap_or_default().to_string(),
            class: f.require_str("class")?.parse()?,
            confidence,
            bbox: f.bbox()?,
            max_level: level as u8,
        })
    }
}

/// Canonical GeoJSON for a detection list.
pub fn detections_to_geojson(ds: &[Detection]) -> String {
    let feats: Vec<Feature> = ds.iter().map(Detection::to_feature).collect();
    crate::geojson::to_string(&feats)
}

pub fn detections_from_geojson(text: &str) -> Result<Vec<Detection>> {
    crate::geojson::parse_features(text)?.iter().map(Detection::from_feature).collect()
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    detections_from_geojson(&text)
}

/// Outcome of parsing one chip file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChipDetections {
    pub detections: Vec<Detection>,
    /// `(line, reason)` for records with out-of-range fields.
    pub rejected: Vec<(usize, String)>,
    /// Records whose box vanished after clipping to the tile.
    pub clipped_away: usize,
}

/// Deterministic detection id from its provenance.
pub fn detection_id(quarter: Quarter, window: &ChipWindow, line: usize) -> String {
    format!("{quarter}/{}/{}/{line}", window.tile_id, window.stem())
}

/// Parse a chip detection file and georeference each record via the
/// tile transform. Malformed lines are hard errors; out-of-range values
/// are rejected and reported.
pub fn parse_chip_detections(text: &str, tile: &Tile, window: &ChipWindow, quarter: Quarter) -> Result<ChipDetections> {
    let extent = tile.extent();
    let chip = window.size as f64;
    let mut out = ChipDetections::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 6 {
            return Err(Error::parse(line_no, format!("expected 6 space-separated fields, got {}", fields.len())));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("class id {:?} is not an integer", fields[0])))?;
        let mut nums = [0.0f64; 5];
        for (k, f) in fields[1..].iter().enumerate() {
            nums[k] = f.parse().map_err(|_| Error::parse(line_no, format!("{f:?} is not a number")))?;
        }
        let [cx, cy, w, h, confidence] = nums;

        let Some(class) = DetectionClass::from_id(class_id) else {
            out.rejected.push((line_no, format!("unknown class id {class_id}")));
            continue;
        };
        if let Some(bad) = nums.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            out.rejected.push((line_no, format!("value {bad} outside [0, 1]")));
            continue;
        }
        if w == 0.0 || h == 0.0 {
            out.rejected.push((line_no, "zero-size box".into()));
            continue;
        }

        let x0 = window.col0 as f64 + (cx - w / 2.0) * chip;
        let x1 = window.col0 as f64 + (cx + w / 2.0) * chip;
        let y0 = window.row0 as f64 + (cy - h / 2.0) * chip;
        let y1 = window.row0 as f64 + (cy + h / 2.0) * chip;
        let (west, north) = tile.transform.pixel_to_geo(x0, y0);
        let (east, south) = tile.transform.pixel_to_geo(x1, y1);
        let Some(bbox) = GeoBox::new(west, south, east, north).ok().and_then(|b| b.clip(&extent)) else {
            out.clipped_away += 1;
            continue;
        };
        out.detections.push(Detection {
            id: detection_id(quarter, window, line_no),
            quarter,
            tile_id: tile.id.clone(),
            class,
            confidence,
            bbox,
            max_level: 0,
        });
    }
    Ok(out)
}

/// Serialize normalized records back into the chip file layout.
pub fn format_chip_record(class: DetectionClass, cx: f64, cy: f64, w: f64, h: f64, confidence: f64) -> String {
    format!("{} {cx} {cy} {w} {h} {confidence}", class.id())
}

/// Set `max_level` to the highest level among pixels whose centres fall
/// inside the box. A box too small to hold any pixel centre takes the
/// level of the pixel under its own centre. Nodata cells count as level 0,
/// matching [`crate::raster::quantize`].
pub fn attach_max_level(d: &Detection, composite: &Raster) -> Result<Detection> {
    if composite.kind() != RasterKind::U8 {
        return Err(Error::InvalidValue("max level needs an 8-bit composite".into()));
    }
    let fp = composite.footprint();
    if d.bbox.intersection_area(&fp) == 0.0 {
        return Err(Error::Footprint(format!("detection {} lies outside the composite", d.id)));
    }
    let t = composite.transform();
    let (cx0, ry0) = t.geo_to_pixel(d.bbox.min_lon(), d.bbox.max_lat());
    let (cx1, ry1) = t.geo_to_pixel(d.bbox.max_lon(), d.bbox.min_lat());
    // pixel c has its centre at c + 0.5
    let col_lo = (cx0 - 0.5).ceil().max(0.0) as usize;
    let col_hi = ((cx1 - 0.5).floor()).min(composite.width() as f64 - 1.0);
    let row_lo = (ry0 - 0.5).ceil().max(0.0) as usize;
    let row_hi = ((ry1 - 0.5).floor()).min(composite.height() as f64 - 1.0);

    let level_at = |col: usize, row: usize| composite.valid(col, row).unwrap_or(0.0);
    let mut best: Option<f64> = None;
    if col_hi >= 0.0 && row_hi >= 0.0 {
        for row in row_lo..=row_hi as usize {
            for col in col_lo..=col_hi as usize {
                let v = level_at(col, row);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    let level = match best {
        Some(v) => v,
        None => composite
            .cell_at(d.bbox.center())
            .map(|(c, r)| level_at(c, r))
            .ok_or_else(|| Error::Footprint(format!("detection {} has its centre outside the composite", d.id)))?,
    };
    Ok(Detection { max_level: level as u8, ..d.clone() })
}

/// One row of the ingest manifest CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub tile_id: String,
    pub quarter: Quarter,
    pub composite_path: PathBuf,
    pub detections_path: PathBuf,
}

/// Read `tile_id,quarter,composite_path,detections_path`. Relative paths
/// resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let mut row: ManifestRow = rec?;
        row.composite_path = base.join(&row.composite_path);
        row.detections_path = base.join(&row.detections_path);
        rows.push(row);
    }
    Ok(rows)
}

/// All `<col0>_<row0>.txt` chip files of one directory, sorted by window.
pub fn read_chip_dir(dir: impl AsRef<Path>, tile_id: &str) -> Result<Vec<(ChipWindow, String)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let p = entry?.path();
        if p.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let window = ChipWindow::from_stem(tile_id, stem)?;
        out.push((window, std::fs::read_to_string(&p)?));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Parse every chip file of one (tile, quarter) unit against its 8-bit
/// composite and attach max levels. Output is sorted by id.
pub fn ingest_unit(
    tile_id: &str,
    quarter: Quarter,
    composite: &Raster,
    chips: &[(ChipWindow, String)],
) -> Result<ChipDetections> {
    let tile = Tile::of_raster(tile_id, composite);
    let mut all = ChipDetections::default();
    for (window, text) in chips {
        if window.size != CHIP_SIZE {
            return Err(Error::Input(format!("chip {} has size {}", window.stem(), window.size)));
        }
        let parsed = parse_chip_detections(text, &tile, window, quarter)
            .map_err(|e| Error::Input(format!("chip {}: {e}", window.stem())))?;
        for d in &parsed.detections {
            all.detections.push(attach_max_level(d, composite)?);
        }
        all.rejected.extend(parsed.rejected);
        all.clipped_away += parsed.clipped_away;
    }
    all.detections.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(all)
}
