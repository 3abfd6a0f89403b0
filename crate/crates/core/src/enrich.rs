//! Spatial attributes for each platform: study region, EEZ, distance to
//! the coast, water depth, and footprint area.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geojson::{Feature, Geometry};
use crate::geom::{haversine_km, GeoBox, LonLat, Polygon, EARTH_RADIUS_KM};
use crate::raster::Raster;
use crate::tracklink::PlatformTrack;

/// Metres per degree of longitude at the equator.
pub const M_PER_DEG_LON: f64 = 111_320.0;
/// Metres per degree of latitude.
pub const M_PER_DEG_LAT: f64 = 110_574.0;
/// Default maximum spacing of densified coastline vertices.
pub const DEFAULT_MAX_SEG_KM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    NorthSea,
    PersianGulf,
    GulfOfMexico,
    None,
}

impl Region {
    pub const STUDY: [Region; 3] = [Region::NorthSea, Region::PersianGulf, Region::GulfOfMexico];

    pub fn code(self) -> &'static str {
        match self {
            Region::NorthSea => "NS",
            Region::PersianGulf => "PG",
            Region::GulfOfMexico => "GOM",
            Region::None => "NONE",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        match norm.as_str() {
            "ns" | "north sea" => Ok(Region::NorthSea),
            "pg" | "persian gulf" => Ok(Region::PersianGulf),
            "gom" | "gulf of mexico" => Ok(Region::GulfOfMexico),
            "none" | "" => Ok(Region::None),
            _ => Err(Error::InvalidValue(format!("unknown region {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneKind {
    Eez,
    Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub name: String,
    pub country_code: Option<String>,
    pub polygons: Vec<Polygon>,
}

impl Zone {
    pub fn contains(&self, p: LonLat) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// Ordered zones; the first zone (file order) containing a point wins.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneLayer {
    pub kind: ZoneKind,
    pub zones: Vec<Zone>,
}

const NAME_KEYS: [&str; 4] = ["name", "region", "zone", "GEONAME"];
const CODE_KEYS: [&str; 4] = ["country_code", "iso", "ISO_TER1", "iso_ter1"];

impl ZoneLayer {
    pub fn new(kind: ZoneKind, zones: Vec<Zone>) -> Result<Self> {
        let mut names = HashSet::new();
        for z in &zones {
            if !names.insert(z.name.as_str()) {
                return Err(Error::Layer(format!("duplicate zone name {:?}", z.name)));
            }
            if kind == ZoneKind::Region {
                z.name.parse::<Region>().map_err(|e| Error::Layer(e.to_string()))?;
            }
        }
        Ok(ZoneLayer { kind, zones })
    }

    /// Features with Polygon/MultiPolygon geometry; the name comes from
    /// `name` (or `region`, `zone`, `GEONAME`), the country code from
    /// `country_code` (or `iso`, `ISO_TER1`).
    pub fn from_features(kind: ZoneKind, features: &[Feature]) -> Result<Self> {
        let mut zones = Vec::new();
        for (k, f) in features.iter().enumerate() {
            let name = NAME_KEYS
                .iter()
                .find_map(|key| f.str_prop(key))
                .ok_or_else(|| Error::Layer(format!("zone feature {k} has no name property")))?
                .to_string();
            let country_code = CODE_KEYS.iter().find_map(|key| f.str_prop(key)).map(str::to_string);
            let polygons = match &f.geometry {
                Geometry::Polygon(r) => vec![Polygon::new(r.clone())?],
                Geometry::MultiPolygon(parts) => parts.iter().map(|r| Polygon::new(r.clone())).collect::<Result<_>>()?,
                _ => return Err(Error::Layer(format!("zone {name:?} is not a polygon"))),
            };
            zones.push(Zone { name, country_code, polygons });
        }
        ZoneLayer::new(kind, zones)
    }

    pub fn load(kind: ZoneKind, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_features(kind, &crate::geojson::read_features(path)?)
    }
}

/// First zone in file order containing the point.
pub fn assign_zone(p: LonLat, layer: &ZoneLayer) -> Option<&Zone> {
    layer.zones.iter().find(|z| z.contains(p))
}

/// Coastline vertices densified so consecutive vertices are at most
/// `max_seg_km` apart, indexed by latitude for nearest-vertex search.
#[derive(Debug, Clone)]
pub struct Coastline {
    polylines: Vec<Vec<LonLat>>,
    max_seg_km: f64,
    by_lat: Vec<LonLat>,
}

impl Coastline {
    pub fn new(polylines: Vec<Vec<LonLat>>, max_seg_km: f64) -> Result<Self> {
        if max_seg_km.is_nan() || max_seg_km <= 0.0 {
            return Err(Error::InvalidValue(format!("max segment {max_seg_km} km must be positive")));
        }
        let mut dense = Vec::with_capacity(polylines.len());
        for (k, line) in polylines.iter().enumerate() {
            if line.len() < 2 {
                return Err(Error::Layer(format!("coastline chain {k} has fewer than 2 vertices")));
            }
            dense.push(densify(line, max_seg_km));
        }
        if dense.is_empty() {
            return Err(Error::Layer("empty coastline".into()));
        }
        let mut by_lat: Vec<LonLat> = dense.iter().flatten().copied().collect();
        by_lat.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        Ok(Coastline { polylines: dense, max_seg_km, by_lat })
    }

    /// Lines, multi-lines, and polygon rings all count as coastline.
    pub fn from_features(features: &[Feature], max_seg_km: f64) -> Result<Self> {
        let mut lines = Vec::new();
        for f in features {
            match &f.geometry {
                Geometry::LineString(l) => lines.push(l.clone()),
                Geometry::MultiLineString(m) | Geometry::Polygon(m) => lines.extend(m.iter().cloned()),
                Geometry::MultiPolygon(mp) => lines.extend(mp.iter().flatten().cloned()),
                Geometry::Point(_) | Geometry::None => {
                    return Err(Error::Layer("coastline features must be lines or polygons".into()))
                }
            }
        }
        Coastline::new(lines, max_seg_km)
    }

    pub fn load(path: impl AsRef<Path>, max_seg_km: f64) -> Result<Self> {
        Self::from_features(&crate::geojson::read_features(path)?, max_seg_km)
    }

    pub fn polylines(&self) -> &[Vec<LonLat>] {
        &self.polylines
    }

    pub fn max_seg_km(&self) -> f64 {
        self.max_seg_km
    }
}

fn densify(line: &[LonLat], max_seg_km: f64) -> Vec<LonLat> {
    let mut out = vec![line[0]];
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let at = |t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
        let mut pieces = (haversine_km(a, b) / max_seg_km).ceil().max(1.0) as usize;
        // Equal steps in lon/lat are not equal on the sphere.
        while (0..pieces).any(|k| haversine_km(at(k as f64 / pieces as f64), at((k + 1) as f64 / pieces as f64)) > max_seg_km) {
            pieces += 1;
        }
        for k in 1..=pieces {
            out.push(at(k as f64 / pieces as f64));
        }
    }
    out
}

/// Haversine distance (km) from `p` to the nearest densified coastline vertex.
pub fn coast_distance(p: LonLat, coast: &Coastline) -> f64 {
    let v = &coast.by_lat;
    let start = v.partition_point(|q| q.1 < p.1);
    let mut best = f64::INFINITY;
    // A vertex is at least as far away as its latitude difference.
    let lat_bound = |q: &LonLat| EARTH_RADIUS_KM * (q.1 - p.1).abs().to_radians();
    for q in &v[start..] {
        if lat_bound(q) > best {
            break;
        }
        best = best.min(haversine_km(p, *q));
    }
    for q in v[..start].iter().rev() {
        if lat_bound(q) > best {
            break;
        }
        best = best.min(haversine_km(p, *q));
    }
    best
}

/// Water depth at a point: the cell value, else the mean of the valid
/// cells in its 3 x 3 neighbourhood, else `None`.
pub fn depth_at(p: LonLat, bathy: &Raster) -> Result<Option<f64>> {
    let (col, row) = bathy
        .cell_at(p)
        .ok_or_else(|| Error::Footprint(format!("({}, {}) is outside the bathymetry grid", p.0, p.1)))?;
    if let Some(v) = bathy.valid(col, row) {
        return Ok(Some(v));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for r in row.saturating_sub(1)..=(row + 1).min(bathy.height() - 1) {
        for c in col.saturating_sub(1)..=(col + 1).min(bathy.width() - 1) {
            if let Some(v) = bathy.valid(c, r) {
                sum += v;
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Equirectangular box area in hectares.
pub fn box_area_ha(b: &GeoBox) -> f64 {
    let mid_lat = (b.min_lat() + b.max_lat()) / 2.0;
    let width_m = b.width() * M_PER_DEG_LON * mid_lat.to_radians().cos();
    let height_m = b.height() * M_PER_DEG_LAT;
    width_m * height_m / 10_000.0
}

/// Optional enrichment inputs; a missing layer leaves its attribute unset.
#[derive(Debug, Clone, Default)]
pub struct EnrichLayers {
    pub regions: Option<ZoneLayer>,
    pub eez: Option<ZoneLayer>,
    pub coastline: Option<Coastline>,
    pub bathymetry: Option<Raster>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedPlatform {
    pub track: PlatformTrack,
    pub region: Region,
    /// Country code of the containing EEZ (zone name if it has no code).
    pub eez: Option<String>,
    pub coast_km: Option<f64>,
    /// Metres, negative below sea level.
    pub depth_m: Option<f64>,
    pub area_ha: f64,
}

pub fn enrich(track: &PlatformTrack, layers: &EnrichLayers) -> Result<EnrichedPlatform> {
    let c = track.center;
    let region = match &layers.regions {
        Some(l) => match assign_zone(c, l) {
            Some(z) => z.name.parse()?,
            None => Region::None,
        },
        None => Region::None,
    };
    let eez = layers
        .eez
        .as_ref()
        .and_then(|l| assign_zone(c, l))
        .map(|z| z.country_code.clone().unwrap_or_else(|| z.name.clone()));
    let coast_km = layers.coastline.as_ref().map(|cl| coast_distance(c, cl));
    let depth_m = match &layers.bathymetry {
        Some(b) => match depth_at(c, b) {
            Ok(d) => d,
            Err(Error::Footprint(msg)) => {
                log::warn!("platform {}: {msg}", track.platform_id);
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(EnrichedPlatform {
        track: track.clone(),
        region,
        eez,
        coast_km,
        depth_m,
        area_ha: box_area_ha(&track.rep_box),
    })
}

fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

impl EnrichedPlatform {
    pub fn to_feature(&self) -> Feature {
        let mut f = self.track.to_feature();
        let p = &mut f.properties;
        p.insert("region".into(), json!(self.region.code()));
        p.insert("eez".into(), self.eez.as_ref().map_or(Value::Null, |e| json!(e)));
        p.insert("coast_km".into(), opt_num(self.coast_km));
        p.insert("depth_m".into(), opt_num(self.depth_m));
        p.insert("area_ha".into(), json!(self.area_ha));
        f
    }

    pub fn from_feature(f: &Feature) -> Result<Self> {
        Ok(EnrichedPlatform {
            track: PlatformTrack::from_feature(f)?,
            region: f.str_prop("region").unwrap_or("NONE").parse()?,
            eez: f.str_prop("eez").map(str::to_string),
            coast_km: f.f64_prop("coast_km"),
            depth_m: f.f64_prop("depth_m"),
            area_ha: f.require_f64("area_ha")?,
        })
    }
}

pub fn platforms_to_geojson(fleet: &[EnrichedPlatform]) -> String {
    let feats: Vec<Feature> = fleet.iter().map(EnrichedPlatform::to_feature).collect();
    crate::geojson::to_string(&feats)
}

pub fn platforms_from_geojson(text: &str) -> Result<Vec<EnrichedPlatform>> {
    crate::geojson::parse_features(text)?.iter().map(EnrichedPlatform::from_feature).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, RasterKind};

    fn square(name: &str, x0: f64, y0: f64, s: f64) -> Zone {
        let ring = vec![(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s), (x0, y0)];
        Zone { name: name.into(), country_code: None, polygons: vec![Polygon::new(vec![ring]).unwrap()] }
    }

    #[test]
    fn zone_assignment() {
        let layer = ZoneLayer::new(ZoneKind::Eez, vec![square("A", 0.0, 0.0, 1.0), square("B", 0.5, 0.0, 1.0)]).unwrap();
        assert_eq!(assign_zone((0.2, 0.5), &layer).unwrap().name, "A");
        assert!(assign_zone((5.0, 5.0), &layer).is_none());
        assert_eq!(assign_zone((0.75, 0.5), &layer).unwrap().name, "A");
        let swapped = ZoneLayer::new(ZoneKind::Eez, vec![square("B", 0.5, 0.0, 1.0), square("A", 0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(assign_zone((0.75, 0.5), &swapped).unwrap().name, "B");
        assert!(ZoneLayer::new(ZoneKind::Eez, vec![square("A", 0.0, 0.0, 1.0), square("A", 3.0, 0.0, 1.0)]).is_err());
        assert!(ZoneLayer::new(ZoneKind::Region, vec![square("Baltic", 0.0, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn coast_distance_examples() {
        let coast = Coastline::new(vec![vec![(1.0, 0.0), (1.0, 0.5)]], 1.0).unwrap();
        let d = coast_distance((0.0, 0.0), &coast);
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM / 180.0).abs() < 1e-9);
        assert!((d - 111.195).abs() < 1e-3);
        assert_eq!(coast_distance((1.0, 0.5), &coast), 0.0);
        let rev = Coastline::new(vec![vec![(1.0, 0.5), (1.0, 0.0)]], 1.0).unwrap();
        assert!((coast_distance((0.3, 0.2), &rev) - coast_distance((0.3, 0.2), &coast)).abs() < 1e-9);
    }

    #[test]
    fn densified_spacing() {
        let coast = Coastline::new(vec![vec![(0.0, 50.0), (0.3, 50.2), (0.31, 50.2)]], 1.0).unwrap();
        for w in coast.polylines()[0].windows(2) {
            assert!(haversine_km(w[0], w[1]) <= 1.0 + 1e-9);
        }
        assert!(Coastline::new(vec![vec![(0.0, 0.0)]], 1.0).is_err());
    }

    fn bathy(vals: Vec<f64>) -> Raster {
        Raster::new(3, 3, GeoTransform::new(0.0, 3.0, 1.0, 1.0).unwrap(), RasterKind::DbFloat, -32768.0, vals).unwrap()
    }

    #[test]
    fn depth_examples() {
        let nd = -32768.0;
        assert_eq!(depth_at((1.5, 1.5), &bathy(vec![-80.0; 9])).unwrap(), Some(-80.0));
        let mut v = vec![-50.0; 9];
        v[4] = nd;
        assert_eq!(depth_at((1.5, 1.5), &bathy(v)).unwrap(), Some(-50.0));
        let mut v = vec![nd; 9];
        v[0] = -40.0;
        v[8] = -60.0;
        assert_eq!(depth_at((1.5, 1.5), &bathy(v)).unwrap(), Some(-50.0));
        assert_eq!(depth_at((1.5, 1.5), &bathy(vec![nd; 9])).unwrap(), None);
        assert!(matches!(depth_at((7.0, 1.5), &bathy(vec![-1.0; 9])), Err(Error::Footprint(_))));
        // corner cell: window clipped to the grid
        let mut v = vec![-10.0; 9];
        v[0] = nd;
        v[1] = -20.0;
        let d = depth_at((0.5, 2.5), &bathy(v)).unwrap().unwrap();
        assert!((d - (-40.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn area_examples() {
        let a = box_area_ha(&GeoBox::new(0.0, -0.0005, 0.001, 0.0005).unwrap());
        assert!((a - 111.32 * 110.574 / 1e4).abs() < 1e-9);
        assert!((a - 1.231).abs() < 5e-4);
        let hi = box_area_ha(&GeoBox::new(0.0, 59.9995, 0.001, 60.0005).unwrap());
        assert!((hi / a - 0.5).abs() < 1e-6);
    }

    #[test]
    fn region_codes() {
        assert_eq!("Gulf of Mexico".parse::<Region>().unwrap(), Region::GulfOfMexico);
        assert_eq!("GoM".parse::<Region>().unwrap(), Region::GulfOfMexico);
        assert_eq!("north_sea".parse::<Region>().unwrap(), Region::NorthSea);
        assert!("Baltic".parse::<Region>().is_err());
    }
}
