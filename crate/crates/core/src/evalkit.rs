//! Detection evaluation: greedy confidence-ordered matching against
//! reference boxes or points, per-region and pooled precision/recall/F1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::detection::Detection;
use crate::enrich::{assign_zone, ZoneLayer};
use crate::error::{Error, Result};
use crate::geojson::{Feature, Geometry};
use crate::geom::{iou, GeoBox, LonLat};

pub const EVAL_IOU: f64 = 0.3;
pub const EVAL_CONF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    #[default]
    Iou,
    /// A prediction matches a reference point (or box center) inside it.
    PointInBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub iou_min: f64,
    /// `None` keeps every prediction, e.g. for reference inventories
    /// without confidences.
    pub conf_min: Option<f64>,
    pub mode: MatchMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { iou_min: EVAL_IOU, conf_min: Some(EVAL_CONF), mode: MatchMode::Iou }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x <= 1.0;
        if !ok(self.iou_min) || self.conf_min.is_some_and(|c| !ok(c)) {
            return Err(Error::InvalidValue(format!(
                "match thresholds must lie in (0, 1]: iou {} conf {:?}",
                self.iou_min, self.conf_min
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub confidence: f64,
    pub bbox: GeoBox,
}

impl From<&Detection> for Prediction {
    fn from(d: &Detection) -> Self {
        Prediction { id: d.id.clone(), confidence: d.confidence, bbox: d.bbox }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Box(GeoBox),
    Point(LonLat),
}

impl Reference {
    pub fn anchor(&self) -> LonLat {
        match self {
            Reference::Box(b) => b.center(),
            Reference::Point(p) => *p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

/// Affinity of a prediction to a reference; `None` when they may not match.
fn affinity(p: &GeoBox, r: &Reference, cfg: &MatchConfig) -> Option<f64> {
    match (cfg.mode, r) {
        (MatchMode::Iou, Reference::Box(b)) => Some(iou(p, b)).filter(|&v| v >= cfg.iou_min),
        (MatchMode::Iou, Reference::Point(_)) => None,
        (MatchMode::PointInBox, r) => {
            let a = r.anchor();
            let c = p.center();
            p.contains(a).then(|| -((a.0 - c.0).powi(2) + (a.1 - c.1).powi(2)))
        }
    }
}

/// Greedy matching. Predictions below `conf_min` are dropped first; the
/// rest are visited by descending confidence (ties by id), each taking the
/// unmatched reference of highest affinity (ties by lower index).
pub fn match_predictions(preds: &[Prediction], truth: &[Reference], cfg: &MatchConfig) -> MatchCounts {
    let mut kept: Vec<&Prediction> =
        preds.iter().filter(|p| cfg.conf_min.is_none_or(|c| p.confidence >= c)).collect();
    kept.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.id.cmp(&b.id)));
    let mut taken = vec![false; truth.len()];
    let mut tp = 0;
    for p in &kept {
        let mut best: Option<(usize, f64)> = None;
        for (j, r) in truth.iter().enumerate() {
            if taken[j] {
                continue;
            }
            if let Some(a) = affinity(&p.bbox, r, cfg) {
                if best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            tp += 1;
        }
    }
    MatchCounts { tp, fp: kept.len() - tp, fn_: truth.len() - tp }
}

/// Convenience wrapper over detections and reference boxes.
pub fn match_detections(preds: &[Detection], truth: &[GeoBox], cfg: &MatchConfig) -> MatchCounts {
    let preds: Vec<Prediction> = preds.iter().map(Prediction::from).collect();
    let truth: Vec<Reference> = truth.iter().map(|b| Reference::Box(*b)).collect();
    match_predictions(&preds, &truth, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(c: MatchCounts) -> Metrics {
        let MatchCounts { tp, fp, fn_ } = c;
        let (precision, recall, f1) = if tp + fp + fn_ == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f)
        };
        Metrics { tp, fp, fn_, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_region: BTreeMap<String, Metrics>,
    pub macro_f1: f64,
    pub micro: Metrics,
}

impl MetricsReport {
    pub fn micro_f1(&self) -> f64 {
        self.micro.f1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<12} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}\n", "region", "tp", "fp", "fn", "precision", "recall", "f1");
        let mut row = |name: &str, m: &Metrics| {
            let _ = writeln!(
                s,
                "{:<12} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
                name, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            );
        };
        for (k, m) in &self.per_region {
            row(k, m);
        }
        row("micro", &self.micro);
        let _ = writeln!(s, "macro_f1 {:.4}", self.macro_f1);
        s
    }
}

/// Per-region metrics, their unweighted mean F1, and pooled (micro) metrics.
pub fn aggregate(per_region: &[(String, MatchCounts)]) -> Result<MetricsReport> {
    if per_region.is_empty() {
        return Err(Error::InvalidValue("aggregate needs at least one region".into()));
    }
    let mut map = BTreeMap::new();
    let mut pooled = MatchCounts::default();
    for (k, c) in per_region {
        if map.insert(k.clone(), Metrics::from_counts(*c)).is_some() {
            return Err(Error::InvalidValue(format!("region {k:?} listed twice")));
        }
        pooled = pooled + *c;
    }
    let macro_f1 = map.values().map(|m| m.f1).sum::<f64>() / map.len() as f64;
    Ok(MetricsReport { per_region: map, macro_f1, micro: Metrics::from_counts(pooled) })
}

/// Mean of F1 scores, for reports that only publish per-region F1.
pub fn macro_f1(f1s: &[f64]) -> f64 {
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

pub const ALL_REGIONS: &str = "ALL";
pub const OUTSIDE: &str = "NONE";

/// Evaluate, optionally split by a zone layer; items are assigned to the
/// zone containing their box center (or point), else to `NONE`.
pub fn evaluate(
    preds: &[Prediction],
    truth: &[Reference],
    cfg: &MatchConfig,
    regions: Option<&ZoneLayer>,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let Some(layer) = regions else {
        return aggregate(&[(ALL_REGIONS.to_string(), match_predictions(preds, truth, cfg))]);
    };
    let key = |p: LonLat| assign_zone(p, layer).map_or(OUTSIDE.to_string(), |z| z.name.clone());
    let mut groups: BTreeMap<String, (Vec<Prediction>, Vec<Reference>)> = BTreeMap::new();
    for z in &layer.zones {
        groups.entry(z.name.clone()).or_default();
    }
    for p in preds {
        groups.entry(key(p.bbox.center())).or_default().0.push(p.clone());
    }
    for r in truth {
        groups.entry(key(r.anchor())).or_default().1.push(*r);
    }
    let per_region: Vec<(String, MatchCounts)> = groups
        .into_iter()
        .filter(|(k, (p, t))| k != OUTSIDE || !p.is_empty() || !t.is_empty())
        .map(|(k, (p, t))| {
            let c = match_predictions(&p, &t, cfg);
            (k, c)
        })
        .collect();
    aggregate(&per_region)
}

/// Predictions from features: box from the geometry, `confidence`
/// property (default 1.0), `id` property (default feature index).
pub fn predictions_from_features(features: &[Feature]) -> Result<Vec<Prediction>> {
    features
        .iter()
        .enumerate()
        .map(|(k, f)| {
            Ok(Prediction {
                id: f.str_prop("id").map_or_else(|| format!("{k:08}"), str::to_string),
                confidence: f.f64_prop("confidence").unwrap_or(1.0),
                bbox: f.bbox().map_err(|e| Error::Input(format!("prediction {k}: {e}")))?,
            })
        })
        .collect()
}

/// References from features: points stay points, anything else is boxed.
pub fn references_from_features(features: &[Feature]) -> Result<Vec<Reference>> {
    features
        .iter()
        .enumerate()
        .map(|(k, f)| match &f.geometry {
            Geometry::Point(p) => Ok(Reference::Point(*p)),
            _ => f.bbox().map(Reference::Box).map_err(|e| Error::Input(format!("reference {k}: {e}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64) -> GeoBox {
        GeoBox::new(x, y, x + w, y + w).unwrap()
    }

    fn pred(id: &str, conf: f64, bbox: GeoBox) -> Prediction {
        Prediction { id: id.into(), confidence: conf, bbox }
    }

    #[test]
    fn perfect_predictions() {
        let boxes = [b(0.0, 0.0, 1.0), b(5.0, 5.0, 1.0)];
        let preds: Vec<_> = boxes.iter().enumerate().map(|(i, x)| pred(&i.to_string(), 0.9, *x)).collect();
        let refs: Vec<_> = boxes.iter().map(|x| Reference::Box(*x)).collect();
        let c = match_predictions(&preds, &refs, &MatchConfig::default());
        assert_eq!(c, MatchCounts { tp: 2, fp: 0, fn_: 0 });
        let m = Metrics::from_counts(c);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_cases() {
        let c = match_predictions(&[], &[Reference::Box(b(0.0, 0.0, 1.0))], &MatchConfig::default());
        assert_eq!(c, MatchCounts { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(Metrics::from_counts(c).f1, 0.0);
        assert_eq!(Metrics::from_counts(MatchCounts::default()).f1, 1.0);
    }

    #[test]
    fn two_preds_one_truth() {
        let t = [Reference::Box(b(0.0, 0.0, 1.0))];
        let p = [pred("a", 0.9, b(0.0, 0.0, 1.0)), pred("b", 0.8, b(0.1, 0.0, 1.0))];
        assert_eq!(match_predictions(&p, &t, &MatchConfig::default()), MatchCounts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn confidence_gate() {
        let t = [Reference::Box(b(0.0, 0.0, 1.0))];
        let p = [pred("a", 0.4, b(0.0, 0.0, 1.0))];
        assert_eq!(match_predictions(&p, &t, &MatchConfig::default()), MatchCounts { tp: 0, fp: 0, fn_: 1 });
        let open = MatchConfig { conf_min: None, ..Default::default() };
        assert_eq!(match_predictions(&p, &t, &open).tp, 1);
    }

    #[test]
    fn point_in_box_mode() {
        let t = [Reference::Point((0.5, 0.5)), Reference::Point((9.0, 9.0))];
        let p = [pred("a", 0.9, b(0.0, 0.0, 1.0))];
        let cfg = MatchConfig { mode: MatchMode::PointInBox, ..Default::default() };
        assert_eq!(match_predictions(&p, &t, &cfg), MatchCounts { tp: 1, fp: 0, fn_: 1 });
        assert_eq!(match_predictions(&p, &t, &MatchConfig::default()).tp, 0);
    }

    #[test]
    fn aggregate_conventions() {
        let r = aggregate(&[("X".into(), MatchCounts { tp: 90, fp: 10, fn_: 11 })]).unwrap();
        assert!((r.micro.precision - 0.9).abs() < 1e-12);
        assert!((r.micro.recall - 90.0 / 101.0).abs() < 1e-12);
        assert!((r.micro.f1 - 180.0 / 201.0).abs() < 1e-12);
        assert_eq!(r.macro_f1, r.micro_f1());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn table_and_json_render() {
        let r = aggregate(&[("NS".into(), MatchCounts { tp: 1, fp: 0, fn_: 1 })]).unwrap();
        assert!(r.to_table().contains("macro_f1 0.6667"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["per_region"]["NS"]["fn"], 1);
    }
}
