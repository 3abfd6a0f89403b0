//! Georeferenced rasters, backscatter quantization and median compositing.

mod ascii;
mod manifest;
mod tiling;

pub use ascii::{format_g6, read_ascii_grid, read_ascii_grid_file, write_ascii_grid, write_ascii_grid_file};
pub use manifest::{group_scenes, read_scene_manifest, SceneRow};
pub use tiling::{chip_grid, ChipWindow, Tile, TileGrid, CHIP_OVERLAP, CHIP_SIZE, CHIP_STRIDE, TILE_STEP_DEG};

use crate::error::{Error, Result};
use crate::geom::{GeoBox, LonLat};

/// Lower end of the quantized backscatter range, in dB.
pub const DB_MIN: f64 = -40.0;
/// Upper end of the quantized backscatter range, in dB.
pub const DB_MAX: f64 = 0.0;
/// Default pixel size in degrees (about 10 m at mid latitudes).
pub const DEFAULT_PIXEL_DEG: f64 = 0.0001;

/// Quantize a backscatter value to an 8-bit level.
///
/// Values are clamped to [-40, 0] dB and mapped linearly onto 0..=255 with
/// round-half-up, so -16.5 dB lands exactly on level 150.
pub fn db_to_u8(db: f64) -> Result<u8> {
    if !db.is_finite() {
        return Err(Error::InvalidValue(format!("backscatter {db} is not finite")));
    }
    let clamped = db.clamp(DB_MIN, DB_MAX);
    let scaled = (clamped - DB_MIN) / (DB_MAX - DB_MIN) * 255.0;
    Ok((scaled + 0.5).floor().min(255.0) as u8)
}

/// Inverse of [`db_to_u8`] at level granularity.
pub fn u8_to_db(level: u8) -> f64 {
    f64::from(level) / 255.0 * (DB_MAX - DB_MIN) + DB_MIN
}

/// Affine north-up transform: pixel `(col, row)` edges map to degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

/// Fractional pixel coordinates within this distance of an integer are
/// snapped to it when inverting the transform.
const PIXEL_SNAP: f64 = 1e-7;

impl GeoTransform {
    pub fn new(origin_lon: f64, origin_lat: f64, pixel_width: f64, pixel_height: f64) -> Result<Self> {
        if !(pixel_width > 0.0 && pixel_height > 0.0) || !pixel_width.is_finite() || !pixel_height.is_finite() {
            return Err(Error::InvalidValue(format!(
                "pixel size ({pixel_width}, {pixel_height}) must be positive"
            )));
        }
        if !origin_lon.is_finite() || !origin_lat.is_finite() {
            return Err(Error::InvalidValue("non-finite transform origin".into()));
        }
        Ok(GeoTransform { origin_lon, origin_lat, pixel_width, pixel_height })
    }

    /// Geographic position of the pixel-grid point `(col, row)`; `(0, 0)`
    /// is the north-west corner of the raster.
    pub fn pixel_to_geo(&self, col: f64, row: f64) -> LonLat {
        (self.origin_lon + col * self.pixel_width, self.origin_lat - row * self.pixel_height)
    }

    /// Inverse of [`GeoTransform::pixel_to_geo`]; results within 1e-7 px of
    /// an integer are snapped so integer grid points round-trip exactly.
    pub fn geo_to_pixel(&self, lon: f64, lat: f64) -> (f64, f64) {
        let col = (lon - self.origin_lon) / self.pixel_width;
        let row = (self.origin_lat - lat) / self.pixel_height;
        (snap(col), snap(row))
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < PIXEL_SNAP {
        r
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    /// Backscatter in dB (or any other float quantity, e.g. depth in metres).
    DbFloat,
    /// Quantized 8-bit levels.
    U8,
}

/// Row-major raster, north row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    transform: GeoTransform,
    kind: RasterKind,
    nodata: f64,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        transform: GeoTransform,
        kind: RasterKind,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty raster {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} raster",
                values.len()
            )));
        }
        let r = Raster { width, height, transform, kind, nodata, values };
        if let Some(bad) = r.values.iter().find(|&&v| !r.is_nodata(v) && !r.kind_accepts(v)) {
            return Err(Error::InvalidValue(format!("{bad} is not a valid {:?} value", r.kind)));
        }
        Ok(r)
    }

    pub fn filled(width: usize, height: usize, transform: GeoTransform, kind: RasterKind, nodata: f64, value: f64) -> Result<Self> {
        Raster::new(width, height, transform, kind, nodata, vec![value; width * height])
    }

    fn kind_accepts(&self, v: f64) -> bool {
        match self.kind {
            RasterKind::DbFloat => v.is_finite(),
            RasterKind::U8 => (0.0..=255.0).contains(&v) && v.fract() == 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }
    pub fn kind(&self) -> RasterKind {
        self.kind
    }
    pub fn nodata(&self) -> f64 {
        self.nodata
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Value at `(col, row)`, `None` for nodata.
    pub fn valid(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.get(col, row);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.transform == other.transform
    }

    /// Geographic extent of the raster.
    pub fn footprint(&self) -> GeoBox {
        let (w, n) = self.transform.pixel_to_geo(0.0, 0.0);
        let (e, s) = self.transform.pixel_to_geo(self.width as f64, self.height as f64);
        GeoBox::new(w, s, e, n).expect("positive pixel size gives a valid footprint")
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> LonLat {
        self.transform.pixel_to_geo(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Cell containing a point; `None` outside the footprint. Points on
    /// the eastern/southern raster edge belong to the last column/row.
    pub fn cell_at(&self, (lon, lat): LonLat) -> Option<(usize, usize)> {
        let (c, r) = self.transform.geo_to_pixel(lon, lat);
        if !(0.0..=self.width as f64).contains(&c) || !(0.0..=self.height as f64).contains(&r) {
            return None;
        }
        let col = (c.floor() as usize).min(self.width - 1);
        let row = (r.floor() as usize).min(self.height - 1);
        Some((col, row))
    }

    /// Copy out a window, filling cells beyond the raster with `fill`.
    pub fn window(&self, col0: usize, row0: usize, width: usize, height: usize, fill: f64) -> Result<Raster> {
        let mut values = Vec::with_capacity(width * height);
        for r in row0..row0 + height {
            for c in col0..col0 + width {
                values.push(if r < self.height && c < self.width { self.get(c, r) } else { fill });
            }
        }
        let (lon, lat) = self.transform.pixel_to_geo(col0 as f64, row0 as f64);
        let t = GeoTransform::new(lon, lat, self.transform.pixel_width, self.transform.pixel_height)?;
        Raster::new(width, height, t, self.kind, self.nodata, values)
    }

    /// Pad on the right/bottom so both sides are at least `min` pixels.
    /// U8 rasters are padded with level 0, float rasters with -40 dB.
    pub fn pad_to(&self, min: usize) -> Raster {
        if self.width >= min && self.height >= min {
            return self.clone();
        }
        let fill = match self.kind {
            RasterKind::U8 => 0.0,
            RasterKind::DbFloat => DB_MIN,
        };
        self.window(0, 0, self.width.max(min), self.height.max(min), fill)
            .expect("padding keeps the grid valid")
    }
}

/// Quantize a dB raster to 8-bit levels. Nodata cells become level 0.
pub fn quantize(raster: &Raster) -> Result<Raster> {
    if raster.kind != RasterKind::DbFloat {
        return Err(Error::InvalidValue("quantize expects a dB raster".into()));
    }
    let values = raster
        .values
        .iter()
        .map(|&v| if raster.is_nodata(v) { Ok(0.0) } else { db_to_u8(v).map(f64::from) })
        .collect::<Result<Vec<_>>>()?;
    Raster::new(raster.width, raster.height, raster.transform, RasterKind::U8, 0.0, values)
}

/// Per-pixel median of a stack of co-registered dB rasters.
///
/// Nodata cells are skipped; an even number of valid values yields the
/// mean of the two middle ones; a pixel with no valid value is nodata.
pub fn median_composite(stack: &[Raster]) -> Result<Raster> {
    let first = stack.first().ok_or_else(|| Error::Shape("empty stack".into()))?;
    for (k, r) in stack.iter().enumerate() {
        if !r.same_grid(first) {
            return Err(Error::Shape(format!("scene {k} is not on the grid of scene 0")));
        }
        if r.kind != RasterKind::DbFloat {
            return Err(Error::Shape(format!("scene {k} is not a dB raster")));
        }
    }
    let n = first.values.len();
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(stack.len());
    for i in 0..n {
        buf.clear();
        buf.extend(stack.iter().map(|r| r.values[i]).filter(|&v| !first.is_nodata(v)));
        out.push(median_in_place(&mut buf).unwrap_or(first.nodata));
    }
    Raster::new(first.width, first.height, first.transform, RasterKind::DbFloat, first.nodata, out)
}

fn median_in_place(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> GeoTransform {
        GeoTransform::new(10.0, 55.0, 0.0001, 0.0001).unwrap()
    }

    fn single(v: f64) -> Raster {
        Raster::new(1, 1, t(), RasterKind::DbFloat, -9999.0, vec![v]).unwrap()
    }

    #[test]
    fn quantization_anchors() {
        assert_eq!(db_to_u8(-40.0).unwrap(), 0);
        assert_eq!(db_to_u8(0.0).unwrap(), 255);
        assert_eq!(db_to_u8(-16.5).unwrap(), 150);
        assert_eq!(db_to_u8(-20.0).unwrap(), 128);
        assert_eq!(db_to_u8(-55.0).unwrap(), 0);
        assert_eq!(db_to_u8(7.0).unwrap(), 255);
        assert!(db_to_u8(f64::NAN).is_err());
        assert!(db_to_u8(f64::INFINITY).is_err());
    }

    #[test]
    fn inverse_levels() {
        assert_eq!(u8_to_db(0), -40.0);
        assert_eq!(u8_to_db(255), 0.0);
        assert!((u8_to_db(150) - (150.0 / 255.0 * 40.0 - 40.0)).abs() < 1e-12);
        assert!((u8_to_db(150) + 16.47).abs() < 5e-3);
        for level in 0..=255u8 {
            assert_eq!(db_to_u8(u8_to_db(level)).unwrap(), level);
        }
    }

    #[test]
    fn transform_examples() {
        let tr = t();
        assert_eq!(tr.pixel_to_geo(0.0, 0.0), (10.0, 55.0));
        let (lon, lat) = tr.pixel_to_geo(100.0, 50.0);
        assert!((lon - 10.01).abs() < 1e-12 && (lat - 54.995).abs() < 1e-12);
        for c in [0usize, 1, 7, 100, 639, 17999] {
            for r in [0usize, 3, 512, 18000] {
                let (lon, lat) = tr.pixel_to_geo(c as f64, r as f64);
                assert_eq!(tr.geo_to_pixel(lon, lat), (c as f64, r as f64));
            }
        }
        assert!(GeoTransform::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(GeoTransform::new(0.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn median_examples() {
        let one = single(-12.5);
        assert_eq!(median_composite(std::slice::from_ref(&one)).unwrap(), one);
        let odd = median_composite(&[single(-30.0), single(-30.0), single(-10.0)]).unwrap();
        assert_eq!(odd.get(0, 0), -30.0);
        let even = median_composite(&[single(-30.0), single(-10.0)]).unwrap();
        assert_eq!(even.get(0, 0), -20.0);
        let gaps = median_composite(&[single(-9999.0), single(-10.0)]).unwrap();
        assert_eq!(gaps.get(0, 0), -10.0);
        let none = median_composite(&[single(-9999.0), single(-9999.0)]).unwrap();
        assert!(none.is_nodata(none.get(0, 0)));
    }

    #[test]
    fn median_shape_errors() {
        assert!(matches!(median_composite(&[]), Err(Error::Shape(_))));
        let other = Raster::new(2, 1, t(), RasterKind::DbFloat, -9999.0, vec![0.0, 0.0]).unwrap();
        assert!(matches!(median_composite(&[single(0.0), other]), Err(Error::Shape(_))));
    }

    #[test]
    fn raster_validation() {
        assert!(Raster::new(2, 2, t(), RasterKind::U8, -1.0, vec![0.0, 1.0, 2.0]).is_err());
        assert!(Raster::new(1, 1, t(), RasterKind::U8, -1.0, vec![256.0]).is_err());
        assert!(Raster::new(1, 1, t(), RasterKind::U8, -1.0, vec![1.5]).is_err());
        assert!(Raster::new(1, 1, t(), RasterKind::DbFloat, -1.0, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn padding_fills_level_zero() {
        let r = Raster::filled(3, 2, t(), RasterKind::U8, 255.0, 200.0).unwrap();
        let p = r.pad_to(4);
        assert_eq!((p.width(), p.height()), (4, 4));
        assert_eq!(p.get(2, 1), 200.0);
        assert_eq!(p.get(3, 1), 0.0);
        assert_eq!(p.get(0, 3), 0.0);
        assert_eq!(p.transform(), r.transform());
    }

    #[test]
    fn cell_lookup() {
        let r = Raster::filled(4, 3, t(), RasterKind::U8, 255.0, 1.0).unwrap();
        assert_eq!(r.cell_at(r.pixel_center(2, 1)), Some((2, 1)));
        assert_eq!(r.cell_at((10.0004, 54.9997)), Some((3, 2)));
        assert_eq!(r.cell_at((9.9, 55.0)), None);
    }
}
