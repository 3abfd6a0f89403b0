//! The 1.8° processing tile grid and the 640 px chip windows cut from each tile.

use serde::{Deserialize, Serialize};

use super::{GeoTransform, Raster, DEFAULT_PIXEL_DEG};
use crate::error::{Error, Result};
use crate::geom::{GeoBox, LonLat};

/// Chip edge length in pixels.
pub const CHIP_SIZE: usize = 640;
/// Fractional overlap between neighbouring chips.
pub const CHIP_OVERLAP: f64 = 0.2;
/// Offset between neighbouring chips: 640 * (1 - 0.2).
pub const CHIP_STRIDE: usize = 512;
/// Tile edge length in degrees.
pub const TILE_STEP_DEG: f64 = 1.8;

/// A 640 x 640 window into a tile, addressed by its top-left pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChipWindow {
    pub tile_id: String,
    pub col0: usize,
    pub row0: usize,
    pub size: usize,
}

impl ChipWindow {
    pub fn new(tile_id: impl Into<String>, col0: usize, row0: usize) -> Self {
        ChipWindow { tile_id: tile_id.into(), col0, row0, size: CHIP_SIZE }
    }

    /// File stem used for per-chip files: `<col0>_<row0>`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.col0, self.row0)
    }

    /// Parse a `<col0>_<row0>` stem.
    pub fn from_stem(tile_id: &str, stem: &str) -> Result<Self> {
        let bad = || Error::Input(format!("chip file stem {stem:?} is not <col0>_<row0>"));
        let (c, r) = stem.split_once('_').ok_or_else(bad)?;
        Ok(ChipWindow::new(tile_id, c.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?))
    }
}

fn axis_offsets(len: usize) -> Vec<usize> {
    let mut offs = Vec::new();
    let mut o = 0;
    loop {
        if o + CHIP_SIZE >= len {
            offs.push(len - CHIP_SIZE);
            break;
        }
        offs.push(o);
        o += CHIP_STRIDE;
    }
    offs
}

/// Chip windows covering a tile, row-major by offset.
///
/// Offsets advance by 512 px; the last window on each axis is pulled back
/// so its far edge sits on the tile edge. Tiles narrower than one chip
/// must be padded first (see [`Raster::pad_to`]).
pub fn chip_grid(tile_id: &str, tile_width: usize, tile_height: usize) -> Result<Vec<ChipWindow>> {
    if tile_width < CHIP_SIZE || tile_height < CHIP_SIZE {
        return Err(Error::PaddingRequired { width: tile_width, height: tile_height });
    }
    let cols = axis_offsets(tile_width);
    let rows = axis_offsets(tile_height);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| ChipWindow::new(tile_id, c, r)))
        .collect())
}

/// A georeferenced tile: identity, transform, and size before any padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub id: String,
    pub transform: GeoTransform,
    pub width: usize,
    pub height: usize,
}

impl Tile {
    pub fn of_raster(id: impl Into<String>, raster: &Raster) -> Self {
        Tile { id: id.into(), transform: *raster.transform(), width: raster.width(), height: raster.height() }
    }

    pub fn extent(&self) -> GeoBox {
        let (w, n) = self.transform.pixel_to_geo(0.0, 0.0);
        let (e, s) = self.transform.pixel_to_geo(self.width as f64, self.height as f64);
        GeoBox::new(w, s, e, n).expect("tile has positive extent")
    }
}

/// Global grid of 1.8° tiles anchored at (-180°, 90°).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileGrid {
    pub step_deg: f64,
    pub pixel_deg: f64,
}

impl Default for TileGrid {
    fn default() -> Self {
        TileGrid { step_deg: TILE_STEP_DEG, pixel_deg: DEFAULT_PIXEL_DEG }
    }
}

impl TileGrid {
    pub fn new(pixel_deg: f64) -> Result<Self> {
        if !(pixel_deg > 0.0 && pixel_deg < TILE_STEP_DEG) {
            return Err(Error::InvalidValue(format!("pixel size {pixel_deg} out of range")));
        }
        Ok(TileGrid { step_deg: TILE_STEP_DEG, pixel_deg })
    }

    /// Pixels per tile edge.
    pub fn tile_pixels(&self) -> usize {
        (self.step_deg / self.pixel_deg).round() as usize
    }

    /// `(ix, iy)` of the tile containing a point; iy counts southward.
    pub fn index_of(&self, (lon, lat): LonLat) -> (u32, u32) {
        let ix = ((lon + 180.0) / self.step_deg).floor().max(0.0) as u32;
        let iy = ((90.0 - lat) / self.step_deg).floor().max(0.0) as u32;
        (ix, iy)
    }

    pub fn tile_id(ix: u32, iy: u32) -> String {
        format!("x{ix:03}y{iy:03}")
    }

    pub fn tile(&self, ix: u32, iy: u32) -> Tile {
        let lon = -180.0 + f64::from(ix) * self.step_deg;
        let lat = 90.0 - f64::from(iy) * self.step_deg;
        let n = self.tile_pixels();
        Tile {
            id: Self::tile_id(ix, iy),
            transform: GeoTransform { origin_lon: lon, origin_lat: lat, pixel_width: self.pixel_deg, pixel_height: self.pixel_deg },
            width: n,
            height: n,
        }
    }

    /// All tiles intersecting a bounding box, row-major from the north-west.
    pub fn tiles_covering(&self, b: &GeoBox) -> Vec<Tile> {
        let (x0, y0) = self.index_of((b.min_lon(), b.max_lat()));
        let (x1, y1) = self.index_of((b.max_lon(), b.min_lat()));
        (y0..=y1).flat_map(|iy| (x0..=x1).map(move |ix| (ix, iy))).map(|(ix, iy)| self.tile(ix, iy)).collect()
    }
}
