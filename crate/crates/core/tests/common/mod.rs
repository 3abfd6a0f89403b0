//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use opd_core::tracklink::{PlatformTrack, TrackMember};
use opd_core::{Detection, DetectionClass, EnrichedPlatform, GeoBox, Quarter, Region};
use proptest::prelude::*;

/// Planar IoU computed from raw corner arrays.
pub fn iou_oracle(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

pub fn corners(b: &GeoBox) -> [f64; 4] {
    [b.min_lon(), b.min_lat(), b.max_lon(), b.max_lat()]
}

/// Transitive closure of the `iou >= t` relation: full adjacency matrix
/// then flood fill. Groups are sorted, ordered by first member.
pub fn closure_oracle(boxes: &[[f64; 4]], t: f64) -> Vec<Vec<usize>> {
    let n = boxes.len();
    let adj: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| i != j && iou_oracle(boxes[i], boxes[j]) >= t).collect()).collect();
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut group = vec![s];
        let mut k = 0;
        while k < group.len() {
            let i = group[k];
            for j in 0..n {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    group.push(j);
                }
            }
            k += 1;
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

pub fn det(id: &str, quarter: Quarter, b: [f64; 4], class: DetectionClass, confidence: f64) -> Detection {
    Detection {
        id: id.into(),
        quarter,
        tile_id: "x000y000".into(),
        class,
        confidence,
        bbox: GeoBox::try_from(b).unwrap(),
        max_level: 200,
    }
}

/// Maximum number of disjoint (pred, truth) pairs over an eligibility
/// matrix, by exhaustive search.
pub fn max_matching_oracle(eligible: &[Vec<bool>]) -> usize {
    fn go(i: usize, eligible: &[Vec<bool>], used: &mut Vec<bool>) -> usize {
        if i == eligible.len() {
            return 0;
        }
        let mut best = go(i + 1, eligible, used);
        for j in 0..used.len() {
            if eligible[i][j] && !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, eligible, used));
                used[j] = false;
            }
        }
        best
    }
    let m = eligible.first().map_or(0, Vec::len);
    go(0, eligible, &mut vec![false; m])
}

/// Median of a sample by full sort; even counts average the middle pair.
pub fn median_oracle(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// EEZ codes, each lying inside one study region.
pub const EEZS: [(&str, Region); 4] =
    [("GBR", Region::NorthSea), ("NOR", Region::NorthSea), ("QAT", Region::PersianGulf), ("USA", Region::GulfOfMexico)];

/// A platform observed in the given study quarter indices.
pub fn platform(k: usize, quarters: &[i32], region: Region, eez: Option<&str>) -> EnrichedPlatform {
    let (lon, lat) = (k as f64 * 0.01, 27.0 + k as f64 * 0.001);
    let members = quarters
        .iter()
        .map(|&qi| TrackMember {
            quarter: Quarter::from_index(qi),
            detection_id: format!("p{k:03}q{qi:02}"),
            bbox: GeoBox::new(lon, lat, lon + 0.001, lat + 0.001).unwrap(),
            confidence: 0.9,
        })
        .collect();
    EnrichedPlatform {
        track: PlatformTrack::from_members(members).unwrap(),
        region,
        eez: eez.map(str::to_string),
        coast_km: Some(k as f64 * 3.7 % 250.0),
        depth_m: if k % 5 == 0 { None } else { Some(-(k as f64 * 11.0 % 300.0)) },
        area_ha: 0.5 + k as f64 % 17.0,
    }
}

/// Fleets with random presence; EEZ (if any) always sits inside the region.
pub fn fleet(max: usize) -> impl Strategy<Value = Vec<EnrichedPlatform>> {
    let one = (prop::sample::subsequence((0..33).collect::<Vec<i32>>(), 1..6), 0usize..6);
    prop::collection::vec(one, 0..max).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (qs, z))| match z {
                0..=3 => platform(k, &qs, EEZS[z].1, Some(EEZS[z].0)),
                4 => platform(k, &qs, Region::NorthSea, None),
                _ => platform(k, &qs, Region::None, None),
            })
            .collect()
    })
}
