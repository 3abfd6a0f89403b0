//! Cross-quarter linking of detections into physical platforms, with
//! gap-filled lifespans and turnover counts.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::consolidate::QuarterInventory;
use crate::error::{Error, Result};
use crate::geojson::{Feature, Geometry};
use crate::geom::{overlapping_pairs, GeoBox, LonLat};
use crate::quarter::Quarter;
use crate::unionfind::connected_components;

/// Default IoU for linking detections across quarters.
pub const IOU_LINK: f64 = 0.1;
/// Tracks shorter than this many quarters (five years) are short-lived.
pub const SHORT_LIMIT_QUARTERS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMember {
    pub quarter: Quarter,
    pub detection_id: String,
    pub bbox: GeoBox,
    pub confidence: f64,
}

/// One physical platform.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformTrack {
    pub platform_id: String,
    /// Sorted by (quarter, detection id).
    pub members: Vec<TrackMember>,
    /// Box of the most confident member.
    pub rep_box: GeoBox,
    /// Mean of the member box centres.
    pub center: LonLat,
    pub first: Quarter,
    pub last: Quarter,
    pub observed: BTreeSet<Quarter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifespanCategory {
    Short,
    Medium,
    FullSpan,
}

impl LifespanCategory {
    pub const ALL: [LifespanCategory; 3] = [LifespanCategory::Short, LifespanCategory::Medium, LifespanCategory::FullSpan];

    pub fn name(self) -> &'static str {
        match self {
            LifespanCategory::Short => "SHORT",
            LifespanCategory::Medium => "MEDIUM",
            LifespanCategory::FullSpan => "FULL_SPAN",
        }
    }

    /// Category of a gap-filled span. Only a span touching both ends of the
    /// study window is full-span.
    pub fn of_span(first: Quarter, last: Quarter) -> Self {
        if first == Quarter::STUDY_FIRST && last == Quarter::STUDY_LAST {
            LifespanCategory::FullSpan
        } else if duration_quarters(first, last) < SHORT_LIMIT_QUARTERS {
            LifespanCategory::Short
        } else {
            LifespanCategory::Medium
        }
    }
}

impl fmt::Display for LifespanCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LifespanCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LifespanCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidValue(format!("unknown lifespan category {s:?}")))
    }
}

/// Inclusive number of quarters between two quarters.
pub fn duration_quarters(first: Quarter, last: Quarter) -> u32 {
    (last.index() - first.index() + 1).max(0) as u32
}

/// Gap-filled duration and category of a track.
pub fn lifespan(t: &PlatformTrack) -> (u32, LifespanCategory) {
    (duration_quarters(t.first, t.last), LifespanCategory::of_span(t.first, t.last))
}

/// Gap-filled presence: true for every quarter from first to last.
pub fn presence(t: &PlatformTrack, q: Quarter) -> bool {
    t.first <= q && q <= t.last
}

/// Presence restricted to quarters with an actual detection.
pub fn presence_observed(t: &PlatformTrack, q: Quarter) -> bool {
    t.observed.contains(&q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Turnover {
    /// Tracks starting after 2017Q1 (installed or relocated in).
    pub installed: usize,
    /// Tracks ending before 2025Q1 (decommissioned or relocated out).
    pub removed: usize,
}

pub fn turnover_of_spans(spans: impl IntoIterator<Item = (Quarter, Quarter)>) -> Turnover {
    let mut t = Turnover::default();
    for (first, last) in spans {
        if first > Quarter::STUDY_FIRST {
            t.installed += 1;
        }
        if last < Quarter::STUDY_LAST {
            t.removed += 1;
        }
    }
    t
}

pub fn turnover(tracks: &[PlatformTrack]) -> Turnover {
    turnover_of_spans(tracks.iter().map(|t| (t.first, t.last)))
}

/// Content-derived platform id: SHA-256 over the sorted member ids.
pub fn platform_id<'a>(member_ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut ids: Vec<&str> = member_ids.into_iter().collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    format!("P{}", &hex::encode(h.finalize())[..16])
}

impl PlatformTrack {
    pub fn from_members(mut members: Vec<TrackMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Input("track without members".into()));
        }
        members.sort_by(|a, b| a.quarter.cmp(&b.quarter).then_with(|| a.detection_id.cmp(&b.detection_id)));
        let rep = members
            .iter()
            .min_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.detection_id.cmp(&b.detection_id)))
            .expect("non-empty");
        let n = members.len() as f64;
        let (sx, sy) = members.iter().fold((0.0, 0.0), |(x, y), m| {
            let c = m.bbox.center();
            (x + c.0, y + c.1)
        });
        let observed: BTreeSet<Quarter> = members.iter().map(|m| m.quarter).collect();
        Ok(PlatformTrack {
            platform_id: platform_id(members.iter().map(|m| m.detection_id.as_str())),
            rep_box: rep.bbox,
            center: (sx / n, sy / n),
            first: *observed.first().expect("non-empty"),
            last: *observed.last().expect("non-empty"),
            observed,
            members,
        })
    }

    pub fn to_feature(&self) -> Feature {
        let (duration, category) = lifespan(self);
        let mut p = Map::new();
        p.insert("platform_id".into(), json!(self.platform_id));
        p.insert("first_quarter".into(), json!(self.first.to_string()));
        p.insert("last_quarter".into(), json!(self.last.to_string()));
        p.insert("duration_quarters".into(), json!(duration));
        p.insert("category".into(), json!(category.name()));
        p.insert("rep_box".into(), json!(<[f64; 4]>::from(self.rep_box)));
        p.insert("observed".into(), json!(self.observed.iter().map(|q| q.to_string()).collect::<Vec<_>>()));
        p.insert("members".into(), serde_json::to_value(&self.members).expect("members serialize"));
        Feature::new(Geometry::Point(self.center), p)
    }

    /// Rebuild a track from its exported feature (members are required).
    pub fn from_feature(f: &Feature) -> Result<Self> {
        let members: Vec<TrackMember> = serde_json::from_value(f.properties.get("members").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::Input(format!("track feature members: {e}")))?;
        let t = PlatformTrack::from_members(members)?;
        if let Some(id) = f.str_prop("platform_id") {
            if id != t.platform_id {
                return Err(Error::Input(format!("platform id {id} does not match its members")));
            }
        }
        Ok(t)
    }
}

pub fn tracks_to_geojson(tracks: &[PlatformTrack]) -> String {
    let feats: Vec<Feature> = tracks.iter().map(PlatformTrack::to_feature).collect();
    crate::geojson::to_string(&feats)
}

pub fn tracks_from_geojson(text: &str) -> Result<Vec<PlatformTrack>> {
    crate::geojson::parse_features(text)?.iter().map(PlatformTrack::from_feature).collect()
}

/// Link all detections of all quarters into tracks: connected components
/// of the `iou >= iou_min` graph. Tracks are sorted by platform id.
pub fn link_quarters(invs: &[QuarterInventory], iou_min: f64) -> Result<Vec<PlatformTrack>> {
    let mut seen = HashSet::new();
    for inv in invs {
        if !seen.insert(inv.quarter) {
            return Err(Error::Input(format!("quarter {} appears twice", inv.quarter)));
        }
    }
    let members: Vec<TrackMember> = invs
        .iter()
        .flat_map(|inv| {
            inv.detections.iter().map(move |d| TrackMember {
                quarter: inv.quarter,
                detection_id: d.id.clone(),
                bbox: d.bbox,
                confidence: d.confidence,
            })
        })
        .collect();
    let boxes: Vec<GeoBox> = members.iter().map(|m| m.bbox).collect();
    let edges = overlapping_pairs(&boxes, iou_min);
    let mut tracks = connected_components(members.len(), &edges)
        .into_iter()
        .map(|comp| PlatformTrack::from_members(comp.into_iter().map(|i| members[i].clone()).collect()))
        .collect::<Result<Vec<_>>>()?;
    tracks.sort_by(|a, b| a.platform_id.cmp(&b.platform_id));
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Detection, DetectionClass};

    fn q(s: &str) -> Quarter {
        s.parse().unwrap()
    }

    fn det(id: &str, quarter: Quarter, b: [f64; 4]) -> Detection {
        Detection {
            id: id.into(),
            quarter,
            tile_id: "t".into(),
            class: DetectionClass::SinglePlatform,
            confidence: 0.9,
            bbox: GeoBox::try_from(b).unwrap(),
            max_level: 200,
        }
    }

    fn track(first: &str, last: &str) -> PlatformTrack {
        let m = |qq: Quarter| TrackMember {
            quarter: qq,
            detection_id: qq.to_string(),
            bbox: GeoBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            confidence: 0.5,
        };
        PlatformTrack::from_members(vec![m(q(first)), m(q(last))]).unwrap()
    }

    #[test]
    fn single_detection_single_track() {
        let inv = QuarterInventory { quarter: q("2019Q2"), detections: vec![det("a", q("2019Q2"), [0.0, 0.0, 1.0, 1.0])] };
        let t = link_quarters(&[inv], IOU_LINK).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].first, t[0].last);
        assert_eq!(lifespan(&t[0]), (1, LifespanCategory::Short));
    }

    #[test]
    fn stationary_full_span() {
        let invs: Vec<_> = Quarter::study_window()
            .map(|qq| QuarterInventory { quarter: qq, detections: vec![det(&format!("{qq}/a"), qq, [2.0, 2.0, 2.001, 2.001])] })
            .collect();
        let t = link_quarters(&invs, IOU_LINK).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(lifespan(&t[0]), (33, LifespanCategory::FullSpan));
        assert_eq!(turnover(&t), Turnover { installed: 0, removed: 0 });
    }

    #[test]
    fn duplicate_quarter_rejected() {
        let inv = QuarterInventory { quarter: q("2019Q2"), detections: vec![] };
        assert!(matches!(link_quarters(&[inv.clone(), inv], IOU_LINK), Err(Error::Input(_))));
    }

    #[test]
    fn lifespan_boundaries() {
        let t = PlatformTrack::from_members(
            ["2018Q3", "2019Q1", "2019Q2"]
                .iter()
                .map(|s| TrackMember { quarter: q(s), detection_id: s.to_string(), bbox: GeoBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), confidence: 0.5 })
                .collect(),
        )
        .unwrap();
        assert_eq!(lifespan(&t), (4, LifespanCategory::Short));
        assert!(presence(&t, q("2018Q4")), "interior gap is filled");
        assert!(!presence_observed(&t, q("2018Q4")));
        assert!(!presence(&t, q("2018Q2")));
        assert_eq!(lifespan(&track("2017Q1", "2025Q1")), (33, LifespanCategory::FullSpan));
        assert_eq!(lifespan(&track("2017Q1", "2024Q4")), (32, LifespanCategory::Medium));
        assert_eq!(lifespan(&track("2017Q2", "2025Q1")), (32, LifespanCategory::Medium));
        assert_eq!(lifespan(&track("2018Q1", "2022Q3")), (19, LifespanCategory::Short));
        assert_eq!(lifespan(&track("2018Q1", "2022Q4")), (20, LifespanCategory::Medium));
    }

    #[test]
    fn turnover_examples() {
        assert_eq!(turnover(&[track("2018Q1", "2019Q1")]), Turnover { installed: 1, removed: 1 });
        assert_eq!(turnover(&[]), Turnover::default());
    }

    #[test]
    fn representative_box_and_center() {
        let mk = |qq: &str, id: &str, x: f64, c: f64| TrackMember {
            quarter: q(qq),
            detection_id: id.into(),
            bbox: GeoBox::new(x, 0.0, x + 1.0, 1.0).unwrap(),
            confidence: c,
        };
        let t = PlatformTrack::from_members(vec![mk("2020Q1", "b", 0.2, 0.5), mk("2019Q1", "a", 0.0, 0.9)]).unwrap();
        assert_eq!(t.rep_box, GeoBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        assert!((t.center.0 - 0.6).abs() < 1e-12);
        assert_eq!(t.members[0].detection_id, "a");
        assert_eq!(t.platform_id, platform_id(["b", "a"]));
    }

    #[test]
    fn geojson_round_trip() {
        let t = vec![track("2017Q1", "2020Q3"), track("2019Q1", "2019Q1")];
        let s = tracks_to_geojson(&t);
        assert_eq!(tracks_from_geojson(&s).unwrap(), t);
        assert!(s.contains("\"category\":\"SHORT\""));
    }
}
