//! Quarter-level postprocessing of detections: gating, overlap grouping,
//! representative selection and wind-farm exclusion.

use std::collections::BTreeMap;
use std::path::Path;

use crate::detection::{Detection, DetectionClass};
use crate::error::{Error, Result};
use crate::geojson::{Feature, Geometry};
use crate::geom::{overlapping_pairs, GeoBox, Polygon};
use crate::quarter::Quarter;
use crate::unionfind::connected_components;

pub use crate::geom::iou;

/// Default confidence gate.
pub const CONF_MIN: f64 = 0.4;
/// Default backscatter gate (8-bit level, about -16.5 dB).
pub const LEVEL_MIN: u8 = 150;
/// Default IoU for grouping duplicates within a quarter.
pub const IOU_DEDUP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsolidateConfig {
    pub conf_min: f64,
    pub level_min: u8,
    pub iou_min: f64,
}

impl Default for ConsolidateConfig {
    fn default() -> Self {
        ConsolidateConfig { conf_min: CONF_MIN, level_min: LEVEL_MIN, iou_min: IOU_DEDUP }
    }
}

/// Named polygons whose interior removes detections.
#[derive(Debug, Clone, Default)]
pub struct ExclusionLayer {
    pub polygons: Vec<(String, Polygon)>,
}

impl ExclusionLayer {
    pub fn from_features(features: &[Feature]) -> Result<Self> {
        let mut polygons = Vec::new();
        for (k, f) in features.iter().enumerate() {
            let name = f.str_prop("name").map(str::to_string).unwrap_or_else(|| format!("feature-{k}"));
            match &f.geometry {
                Geometry::Polygon(rings) => polygons.push((name, Polygon::new(rings.clone())?)),
                Geometry::MultiPolygon(parts) => {
                    for rings in parts {
                        polygons.push((name.clone(), Polygon::new(rings.clone())?));
                    }
                }
                _ => return Err(Error::Layer(format!("exclusion feature {name:?} is not a polygon"))),
            }
        }
        Ok(ExclusionLayer { polygons })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_features(&crate::geojson::read_features(path)?)
    }

    /// Name of the first polygon containing the point.
    pub fn hit(&self, p: (f64, f64)) -> Option<&str> {
        self.polygons.iter().find(|(_, poly)| poly.contains(p)).map(|(n, _)| n.as_str())
    }
}

/// Cleaned detections of one quarter.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterInventory {
    pub quarter: Quarter,
    pub detections: Vec<Detection>,
}

impl QuarterInventory {
    /// Check the inventory invariants: one quarter, no wind turbines, no
    /// pair overlapping at or above `iou_min`.
    pub fn validate(&self, iou_min: f64) -> Result<()> {
        if let Some(d) = self.detections.iter().find(|d| d.quarter != self.quarter) {
            return Err(Error::Input(format!("{} belongs to {}, not {}", d.id, d.quarter, self.quarter)));
        }
        if let Some(d) = self.detections.iter().find(|d| d.class == DetectionClass::WindTurbine) {
            return Err(Error::Input(format!("{} is a wind turbine", d.id)));
        }
        let boxes: Vec<GeoBox> = self.detections.iter().map(|d| d.bbox).collect();
        if let Some(&(i, j)) = overlapping_pairs(&boxes, iou_min).first() {
            return Err(Error::Input(format!(
                "{} and {} overlap at IoU >= {iou_min}",
                self.detections[i].id, self.detections[j].id
            )));
        }
        Ok(())
    }
}

/// Keep detections with `confidence >= conf_min` and `max_level >= level_min`.
pub fn gate_detections(ds: &[Detection], conf_min: f64, level_min: u8) -> Vec<Detection> {
    ds.iter().filter(|d| d.confidence >= conf_min && d.max_level >= level_min).cloned().collect()
}

/// Connected components of the `iou >= iou_min` graph. Clusters are
/// ordered by their first member's input position; members keep input order.
pub fn group_overlaps(ds: &[Detection], iou_min: f64) -> Vec<Vec<Detection>> {
    let boxes: Vec<GeoBox> = ds.iter().map(|d| d.bbox).collect();
    let edges = overlapping_pairs(&boxes, iou_min);
    connected_components(ds.len(), &edges)
        .into_iter()
        .map(|c| c.into_iter().map(|i| ds[i].clone()).collect())
        .collect()
}

/// Pick the cluster's representative.
///
/// The most frequent class wins; ties go to the higher summed confidence,
/// then to the lexicographically smaller class name. Within the winning
/// class the most confident member is returned, ties to the smallest id.
pub fn select_representative(cluster: &[Detection]) -> Result<Detection> {
    if cluster.is_empty() {
        return Err(Error::Input("empty cluster".into()));
    }
    let mut tally: BTreeMap<&'static str, (usize, f64)> = BTreeMap::new();
    for d in cluster {
        let e = tally.entry(d.class.name()).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d.confidence;
    }
    // BTreeMap iterates in name order, so strict comparisons keep the
    // lexicographically first class on a full tie.
    let mut winner: Option<(&str, usize, f64)> = None;
    for (&name, &(n, sum)) in &tally {
        let better = match winner {
            None => true,
            Some((_, wn, ws)) => n > wn || (n == wn && sum > ws),
        };
        if better {
            winner = Some((name, n, sum));
        }
    }
    let class = winner.expect("non-empty cluster").0;
    let best = cluster
        .iter()
        .filter(|d| d.class.name() == class)
        .min_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.id.cmp(&b.id)))
        .expect("winning class has members");
    Ok(best.clone())
}

/// Drop wind turbines and any detection whose box centre lies inside an
/// exclusion polygon (boundary counts as inside).
pub fn apply_exclusion(ds: &[Detection], layer: &ExclusionLayer) -> Vec<Detection> {
    ds.iter()
        .filter(|d| d.class != DetectionClass::WindTurbine && layer.hit(d.bbox.center()).is_none())
        .cloned()
        .collect()
}

/// Full quarter consolidation: gate, group, select, exclude. Output is
/// sorted by id.
pub fn consolidate_quarter(
    quarter: Quarter,
    ds: &[Detection],
    cfg: &ConsolidateConfig,
    layer: &ExclusionLayer,
) -> Result<QuarterInventory> {
    if let Some(d) = ds.iter().find(|d| d.quarter != quarter) {
        return Err(Error::Input(format!("{} is from {}, expected {quarter}", d.id, d.quarter)));
    }
    let gated = gate_detections(ds, cfg.conf_min, cfg.level_min);
    let reps = group_overlaps(&gated, cfg.iou_min)
        .iter()
        .map(|c| select_representative(c))
        .collect::<Result<Vec<_>>>()?;
    let mut kept = apply_exclusion(&reps, layer);
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(QuarterInventory { quarter, detections: kept })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(id: &str, class: DetectionClass, conf: f64, b: [f64; 4]) -> Detection {
        Detection {
            id: id.into(),
            quarter: Quarter::STUDY_FIRST,
            tile_id: "t".into(),
            class,
            confidence: conf,
            bbox: GeoBox::try_from(b).unwrap(),
            max_level: 200,
        }
    }

    use DetectionClass::*;

    #[test]
    fn gate_boundaries_inclusive() {
        let mut a = det("a", SinglePlatform, 0.39, [0.0, 0.0, 1.0, 1.0]);
        a.max_level = 200;
        let mut b = det("b", SinglePlatform, 0.40, [0.0, 0.0, 1.0, 1.0]);
        b.max_level = 150;
        let mut c = det("c", SinglePlatform, 0.9, [0.0, 0.0, 1.0, 1.0]);
        c.max_level = 149;
        let kept = gate_detections(&[a, b, c], CONF_MIN, LEVEL_MIN);
        assert_eq!(kept.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), vec!["b"]);
        assert_eq!(gate_detections(&kept, CONF_MIN, LEVEL_MIN), kept);
    }

    #[test]
    fn grouping_is_transitive() {
        // A-B and B-C overlap at IoU 1/3, A and C are disjoint
        let a = det("a", SinglePlatform, 0.9, [0.0, 0.0, 2.0, 1.0]);
        let b = det("b", SinglePlatform, 0.9, [1.0, 0.0, 3.0, 1.0]);
        let c = det("c", SinglePlatform, 0.9, [2.0, 0.0, 4.0, 1.0]);
        assert!((iou(&a.bbox, &b.bbox) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a.bbox, &c.bbox), 0.0);
        let g = group_overlaps(&[a.clone(), b, c], 0.2);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].len(), 3);
        let far = det("d", SinglePlatform, 0.9, [10.0, 0.0, 11.0, 1.0]);
        assert_eq!(group_overlaps(&[a, far], 0.2).len(), 2);
    }

    #[test]
    fn representative_rules() {
        let one = det("x", PlatformCluster, 0.3, [0.0, 0.0, 1.0, 1.0]);
        assert_eq!(select_representative(std::slice::from_ref(&one)).unwrap(), one);

        let members = [
            det("a", SinglePlatform, 0.6, [0.0, 0.0, 1.0, 1.0]),
            det("b", SinglePlatform, 0.5, [0.0, 0.0, 1.0, 1.0]),
            det("c", PlatformCluster, 0.9, [0.0, 0.0, 1.0, 1.0]),
        ];
        assert_eq!(select_representative(&members).unwrap().id, "a");

        let tie = [
            det("a", SinglePlatform, 0.5, [0.0, 0.0, 1.0, 1.0]),
            det("b", PlatformCluster, 0.8, [0.0, 0.0, 1.0, 1.0]),
        ];
        assert_eq!(select_representative(&tie).unwrap().id, "b");

        let full_tie = [
            det("a", SinglePlatform, 0.5, [0.0, 0.0, 1.0, 1.0]),
            det("b", PlatformCluster, 0.5, [0.0, 0.0, 1.0, 1.0]),
        ];
        assert_eq!(select_representative(&full_tie).unwrap().id, "b", "platform_cluster < single_platform");

        let same_conf = [
            det("z", SinglePlatform, 0.7, [0.0, 0.0, 1.0, 1.0]),
            det("m", SinglePlatform, 0.7, [0.0, 0.0, 1.0, 1.0]),
        ];
        assert_eq!(select_representative(&same_conf).unwrap().id, "m");
        assert!(select_representative(&[]).is_err());
    }

    fn square_layer() -> ExclusionLayer {
        let ring = vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (0.0, 0.0)];
        ExclusionLayer { polygons: vec![("farm".into(), Polygon::new(vec![ring]).unwrap())] }
    }

    #[test]
    fn exclusion_rules() {
        let layer = square_layer();
        let inside = det("in", SinglePlatform, 0.9, [0.5, 0.5, 1.5, 1.5]);
        let edge = det("edge", SinglePlatform, 0.9, [1.5, 0.5, 2.5, 1.5]); // centre (2, 1)
        let outside = det("out", SinglePlatform, 0.9, [5.0, 5.0, 6.0, 6.0]);
        let turbine = det("wt", WindTurbine, 0.9, [5.0, 5.0, 6.0, 6.0]);
        let kept = apply_exclusion(&[inside.clone(), edge, outside.clone(), turbine.clone()], &layer);
        assert_eq!(kept, vec![outside]);
        let empty = ExclusionLayer::default();
        assert_eq!(apply_exclusion(&[inside.clone(), turbine], &empty), vec![inside]);
    }

    #[test]
    fn consolidation_is_idempotent_and_valid() {
        let ds = vec![
            det("a", SinglePlatform, 0.9, [0.0, 0.0, 1.0, 1.0]),
            det("b", SinglePlatform, 0.8, [0.05, 0.0, 1.05, 1.0]),
            det("c", WindTurbine, 0.95, [3.0, 3.0, 4.0, 4.0]),
            det("d", PlatformCluster, 0.3, [6.0, 6.0, 7.0, 7.0]),
        ];
        let cfg = ConsolidateConfig::default();
        let layer = ExclusionLayer::default();
        let inv = consolidate_quarter(Quarter::STUDY_FIRST, &ds, &cfg, &layer).unwrap();
        assert_eq!(inv.detections.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), vec!["a"]);
        inv.validate(cfg.iou_min).unwrap();
        let again = consolidate_quarter(Quarter::STUDY_FIRST, &inv.detections, &cfg, &layer).unwrap();
        assert_eq!(again, inv);
    }

    #[test]
    fn bad_layer_geometry() {
        let f = Feature::new(Geometry::Point((0.0, 0.0)), Default::default());
        assert!(matches!(ExclusionLayer::from_features(&[f]), Err(Error::Layer(_))));
        let open = Feature::new(
            Geometry::Polygon(vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]]),
            Default::default(),
        );
        assert!(matches!(ExclusionLayer::from_features(&[open]), Err(Error::Layer(_))));
    }
}
