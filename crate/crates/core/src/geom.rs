//! Planar geometry in geographic degrees: boxes, IoU, polygon containment,
//! and great-circle distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius (IUGG) in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A `(lon, lat)` pair in degrees.
pub type LonLat = (f64, f64);

/// Axis-aligned geographic bounding box with non-zero extent on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct GeoBox {
    min_lon: f64,
    min_lat: f64,
    max_lon: f64,
    max_lat: f64,
}

impl GeoBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self> {
        let all_finite = [min_lon, min_lat, max_lon, max_lat].iter().all(|v| v.is_finite());
        if !all_finite || min_lon >= max_lon || min_lat >= max_lat {
            return Err(Error::InvalidValue(format!(
                "degenerate box ({min_lon}, {min_lat}, {max_lon}, {max_lat})"
            )));
        }
        Ok(GeoBox { min_lon, min_lat, max_lon, max_lat })
    }

    pub fn min_lon(&self) -> f64 {
        self.min_lon
    }
    pub fn min_lat(&self) -> f64 {
        self.min_lat
    }
    pub fn max_lon(&self) -> f64 {
        self.max_lon
    }
    pub fn max_lat(&self) -> f64 {
        self.max_lat
    }

    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    /// Planar area in square degrees.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> LonLat {
        ((self.min_lon + self.max_lon) / 2.0, (self.min_lat + self.max_lat) / 2.0)
    }

    /// Closed-interval containment.
    pub fn contains(&self, (lon, lat): LonLat) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    pub fn intersection_area(&self, other: &GeoBox) -> f64 {
        let w = self.max_lon.min(other.max_lon) - self.min_lon.max(other.min_lon);
        let h = self.max_lat.min(other.max_lat) - self.min_lat.max(other.min_lat);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clip to `bounds`; `None` when nothing of positive area remains.
    pub fn clip(&self, bounds: &GeoBox) -> Option<GeoBox> {
        GeoBox::new(
            self.min_lon.max(bounds.min_lon),
            self.min_lat.max(bounds.min_lat),
            self.max_lon.min(bounds.max_lon),
            self.max_lat.min(bounds.max_lat),
        )
        .ok()
    }

    pub fn translate(&self, dlon: f64, dlat: f64) -> Result<GeoBox> {
        GeoBox::new(self.min_lon + dlon, self.min_lat + dlat, self.max_lon + dlon, self.max_lat + dlat)
    }

    /// Closed exterior ring, counter-clockwise from the south-west corner.
    pub fn ring(&self) -> [LonLat; 5] {
        [
            (self.min_lon, self.min_lat),
            (self.max_lon, self.min_lat),
            (self.max_lon, self.max_lat),
            (self.min_lon, self.max_lat),
            (self.min_lon, self.min_lat),
        ]
    }

    /// Bounding box of a vertex list.
    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a LonLat>) -> Result<GeoBox> {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &(x, y) in pts {
            b[0] = b[0].min(x);
            b[1] = b[1].min(y);
            b[2] = b[2].max(x);
            b[3] = b[3].max(y);
        }
        GeoBox::new(b[0], b[1], b[2], b[3])
    }
}

impl TryFrom<[f64; 4]> for GeoBox {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        GeoBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<GeoBox> for [f64; 4] {
    fn from(b: GeoBox) -> Self {
        [b.min_lon, b.min_lat, b.max_lon, b.max_lat]
    }
}

/// Intersection over union in planar degree² arithmetic.
pub fn iou(a: &GeoBox, b: &GeoBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Index pairs `(i, j)`, `i < j`, whose boxes have `iou >= iou_min`.
///
/// Sweep over boxes sorted by western edge; only boxes that overlap in
/// longitude are compared. `iou_min` must be positive so that only
/// intersecting boxes can qualify.
pub fn overlapping_pairs(boxes: &[GeoBox], iou_min: f64) -> Vec<(usize, usize)> {
    debug_assert!(iou_min > 0.0);
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[a].min_lon.total_cmp(&boxes[b].min_lon).then(a.cmp(&b)));
    let mut pairs = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let bi = &boxes[i];
        for &j in &order[pos + 1..] {
            let bj = &boxes[j];
            if bj.min_lon >= bi.max_lon {
                break;
            }
            if iou(bi, bj) >= iou_min {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// A polygon as a list of closed rings (exterior and holes alike).
///
/// Containment uses the even-odd rule over all rings; points on any ring
/// edge count as inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    rings: Vec<Vec<LonLat>>,
}

const EDGE_EPS: f64 = 1e-12;

impl Polygon {
    pub fn new(rings: Vec<Vec<LonLat>>) -> Result<Self> {
        if rings.is_empty() {
            return Err(Error::Layer("polygon without rings".into()));
        }
        for (k, ring) in rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(Error::Layer(format!("ring {k} has {} vertices, need >= 4", ring.len())));
            }
            if ring.first() != ring.last() {
                return Err(Error::Layer(format!("ring {k} is not closed")));
            }
            if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::Layer(format!("ring {k} has non-finite coordinates")));
            }
        }
        Ok(Polygon { rings })
    }

    pub fn rings(&self) -> &[Vec<LonLat>] {
        &self.rings
    }

    pub fn contains(&self, p: LonLat) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if on_segment(p, a, b) {
                    return true;
                }
                // Half-open rule on y avoids double counting shared vertices.
                if (a.1 > p.1) != (b.1 > p.1) {
                    let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                    if p.0 < x {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

fn on_segment(p: LonLat, a: LonLat, b: LonLat) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1) <= EDGE_EPS;
    }
    let cross = dx * (p.1 - a.1) - dy * (p.0 - a.0);
    if (cross / len).abs() > EDGE_EPS {
        return false;
    }
    let t = (dx * (p.0 - a.0) + dy * (p.1 - a.1)) / (len * len);
    (-EDGE_EPS..=1.0 + EDGE_EPS).contains(&t)
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: LonLat, b: LonLat) -> f64 {
    let (lat1, lat2) = (a.1.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.0 - a.0).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> GeoBox {
        GeoBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        let v = iou(&a, &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
        // touching edges have zero intersection
        assert_eq!(iou(&a, &bx(2.0, 0.0, 3.0, 2.0)), 0.0);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(GeoBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(GeoBox::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(GeoBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn polygon_boundary_and_holes() {
        let outer = vec![(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (0.0, 0.0)];
        let hole = vec![(1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0), (1.0, 1.0)];
        let p = Polygon::new(vec![outer, hole]).unwrap();
        assert!(p.contains((0.5, 0.5)));
        assert!(!p.contains((2.0, 2.0)));
        assert!(p.contains((2.0, 0.0)), "edge midpoint");
        assert!(p.contains((2.0, 1.0)), "hole edge counts as boundary");
        assert!(p.contains((4.0, 4.0)), "vertex");
        assert!(!p.contains((5.0, 2.0)));
    }

    #[test]
    fn polygon_validation() {
        assert!(Polygon::new(vec![vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]]).is_err());
        assert!(Polygon::new(vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]]).is_err());
    }

    #[test]
    fn haversine_one_degree_on_equator() {
        let d = haversine_km((0.0, 0.0), (1.0, 0.0));
        let expected = std::f64::consts::PI * EARTH_RADIUS_KM / 180.0;
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 111.195).abs() < 1e-3);
        assert_eq!(haversine_km((3.0, 4.0), (3.0, 4.0)), 0.0);
    }

    #[test]
    fn sweep_matches_all_pairs() {
        let boxes: Vec<GeoBox> = (0..40)
            .map(|i| {
                let x = ((i * 37) % 23) as f64 * 0.3;
                let y = ((i * 11) % 7) as f64 * 0.4;
                bx(x, y, x + 1.0, y + 0.8)
            })
            .collect();
        let mut brute = Vec::new();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if iou(&boxes[i], &boxes[j]) >= 0.2 {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(overlapping_pairs(&boxes, 0.2), brute);
    }
}
