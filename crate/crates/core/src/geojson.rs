//! Minimal GeoJSON FeatureCollection reading and canonical writing.
//!
//! Written collections put one compact feature per line with object keys
//! sorted, so identical data always serializes to identical bytes.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geom::{GeoBox, LonLat};

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(LonLat),
    LineString(Vec<LonLat>),
    MultiLineString(Vec<Vec<LonLat>>),
    Polygon(Vec<Vec<LonLat>>),
    MultiPolygon(Vec<Vec<Vec<LonLat>>>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub geometry: Geometry,
    pub properties: Map<String, Value>,
}

impl Feature {
    pub fn new(geometry: Geometry, properties: Map<String, Value>) -> Self {
        Feature { geometry, properties }
    }

    pub fn boxed(b: &GeoBox, properties: Map<String, Value>) -> Self {
        Feature::new(Geometry::Polygon(vec![b.ring().to_vec()]), properties)
    }

    /// Bounding box of the geometry's vertices.
    pub fn bbox(&self) -> Result<GeoBox> {
        let pts: Vec<LonLat> = match &self.geometry {
            Geometry::Point(p) => vec![*p],
            Geometry::LineString(l) => l.clone(),
            Geometry::MultiLineString(m) | Geometry::Polygon(m) => m.concat(),
            Geometry::MultiPolygon(mp) => mp.iter().flat_map(|p| p.concat()).collect(),
            Geometry::None => Vec::new(),
        };
        GeoBox::from_points(&pts)
    }

    pub fn str_prop(&self, key: &str) -> Option<&str> {
        self.properties.get(key).and_then(Value::as_str)
    }

    pub fn f64_prop(&self, key: &str) -> Option<f64> {
        self.properties.get(key).and_then(Value::as_f64)
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.str_prop(key).ok_or_else(|| Error::Input(format!("feature lacks string property {key:?}")))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64_prop(key).ok_or_else(|| Error::Input(format!("feature lacks numeric property {key:?}")))
    }
}

fn coords(v: &Value) -> Result<LonLat> {
    let a = v.as_array().ok_or_else(|| Error::Input("coordinate is not an array".into()))?;
    match (a.first().and_then(Value::as_f64), a.get(1).and_then(Value::as_f64)) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(Error::Input("coordinate needs two numbers".into())),
    }
}

fn line(v: &Value) -> Result<Vec<LonLat>> {
    v.as_array()
        .ok_or_else(|| Error::Input("expected a coordinate array".into()))?
        .iter()
        .map(coords)
        .collect()
}

fn lines(v: &Value) -> Result<Vec<Vec<LonLat>>> {
    v.as_array()
        .ok_or_else(|| Error::Input("expected an array of coordinate arrays".into()))?
        .iter()
        .map(line)
        .collect()
}

fn parse_geometry(v: &Value) -> Result<Geometry> {
    if v.is_null() {
        return Ok(Geometry::None);
    }
    let kind = v.get("type").and_then(Value::as_str).unwrap_or_default();
    let c = v.get("coordinates").unwrap_or(&Value::Null);
    Ok(match kind {
        "Point" => Geometry::Point(coords(c)?),
        "LineString" => Geometry::LineString(line(c)?),
        "MultiLineString" => Geometry::MultiLineString(lines(c)?),
        "Polygon" => Geometry::Polygon(lines(c)?),
        "MultiPolygon" => Geometry::MultiPolygon(
            c.as_array()
                .ok_or_else(|| Error::Input("MultiPolygon coordinates".into()))?
                .iter()
                .map(lines)
                .collect::<Result<_>>()?,
        ),
        other => return Err(Error::Input(format!("unsupported geometry type {other:?}"))),
    })
}

pub fn parse_features(text: &str) -> Result<Vec<Feature>> {
    let root: Value = serde_json::from_str(text)?;
    let feats = match root.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => root
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Input("FeatureCollection without features".into()))?
            .clone(),
        Some("Feature") => vec![root],
        _ => return Err(Error::Input("not a GeoJSON FeatureCollection".into())),
    };
    feats
        .iter()
        .map(|f| {
            let geometry = parse_geometry(f.get("geometry").unwrap_or(&Value::Null))?;
            let properties = f.get("properties").and_then(Value::as_object).cloned().unwrap_or_default();
            Ok(Feature { geometry, properties })
        })
        .collect()
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<Feature>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_features(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn pt(p: &LonLat) -> Value {
    json!([p.0, p.1])
}

fn geometry_json(g: &Geometry) -> Value {
    let ring = |r: &Vec<LonLat>| Value::Array(r.iter().map(pt).collect());
    let rings = |rs: &Vec<Vec<LonLat>>| Value::Array(rs.iter().map(ring).collect());
    match g {
        Geometry::Point(p) => json!({"type": "Point", "coordinates": pt(p)}),
        Geometry::LineString(l) => json!({"type": "LineString", "coordinates": ring(l)}),
        Geometry::MultiLineString(m) => json!({"type": "MultiLineString", "coordinates": rings(m)}),
        Geometry::Polygon(p) => json!({"type": "Polygon", "coordinates": rings(p)}),
        Geometry::MultiPolygon(mp) => {
            json!({"type": "MultiPolygon", "coordinates": Value::Array(mp.iter().map(rings).collect())})
        }
        Geometry::None => Value::Null,
    }
}

pub fn to_string(features: &[Feature]) -> String {
    let mut out = String::from("{\"type\":\"FeatureCollection\",\"features\":[\n");
    for (i, f) in features.iter().enumerate() {
        let v = json!({
            "type": "Feature",
            "geometry": geometry_json(&f.geometry),
            "properties": Value::Object(f.properties.clone()),
        });
        out.push_str(&v.to_string());
        out.push_str(if i + 1 < features.len() { ",\n" } else { "\n" });
    }
    out.push_str("]}\n");
    out
}

pub fn write_features(path: impl AsRef<Path>, features: &[Feature]) -> Result<()> {
    std::fs::write(path, to_string(features))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_stable() {
        let mut props = Map::new();
        props.insert("b".into(), json!(1));
        props.insert("a".into(), json!("x"));
        let b = GeoBox::new(0.1, 0.2, 0.30000000000000004, 0.4).unwrap();
        let feats = vec![Feature::boxed(&b, props), Feature::new(Geometry::Point((1.5, -2.0)), Map::new())];
        let s = to_string(&feats);
        let back = parse_features(&s).unwrap();
        assert_eq!(back, feats);
        assert_eq!(to_string(&back), s);
        assert_eq!(back[0].bbox().unwrap(), b);
        assert!(s.contains("\"properties\":{\"a\":\"x\",\"b\":1}"));
    }

    #[test]
    fn empty_collection() {
        let s = to_string(&[]);
        assert!(parse_features(&s).unwrap().is_empty());
        assert!(parse_features("{\"type\":\"Point\"}").is_err());
    }
}
