use proptest::prelude::*;

use opd_core::enrich::{
    assign_zone, box_area_ha, coast_distance, depth_at, enrich, Coastline, EnrichLayers, Zone, ZoneKind, ZoneLayer,
};
use opd_core::geom::{haversine_km, Polygon};
use opd_core::raster::{GeoTransform, Raster, RasterKind};
use opd_core::tracklink::{PlatformTrack, TrackMember};
use opd_core::{GeoBox, LonLat, Quarter, Region};

fn polyline() -> impl Strategy<Value = Vec<LonLat>> {
    prop::collection::vec((-2.0f64..2.0, 50.0f64..54.0), 2..6)
}

fn point() -> impl Strategy<Value = LonLat> {
    (-3.0f64..3.0, 49.0f64..55.0)
}

fn square(x: f64, y: f64, s: f64) -> Polygon {
    Polygon::new(vec![vec![(x, y), (x + s, y), (x + s, y + s), (x, y + s), (x, y)]]).unwrap()
}

fn regions() -> ZoneLayer {
    let z = |name: &str, x: f64| Zone { name: name.into(), country_code: None, polygons: vec![square(x, 0.0, 10.0)] };
    ZoneLayer::new(ZoneKind::Region, vec![z("NS", 0.0), z("PG", 20.0), z("GOM", 40.0)]).unwrap()
}

fn track(lon: f64, lat: f64) -> PlatformTrack {
    PlatformTrack::from_members(vec![TrackMember {
        quarter: Quarter::STUDY_FIRST,
        detection_id: format!("{lon}/{lat}"),
        bbox: GeoBox::new(lon, lat, lon + 0.001, lat + 0.001).unwrap(),
        confidence: 0.9,
    }])
    .unwrap()
}

proptest! {
    #[test]
    fn coast_distance_is_nearest_dense_vertex(lines in prop::collection::vec(polyline(), 1..3), p in point()) {
        let coast = Coastline::new(lines, 1.0).unwrap();
        let brute = coast.polylines().iter().flatten().map(|v| haversine_km(p, *v)).fold(f64::INFINITY, f64::min);
        let got = coast_distance(p, &coast);
        prop_assert!(got >= 0.0);
        prop_assert_eq!(got, brute);
    }

    #[test]
    fn coast_distance_ignores_vertex_order(lines in prop::collection::vec(polyline(), 1..3), p in point()) {
        let fwd = Coastline::new(lines.clone(), 1.0).unwrap();
        let rev: Vec<Vec<LonLat>> = lines.iter().rev().map(|l| l.iter().rev().copied().collect()).collect();
        let rev = Coastline::new(rev, 1.0).unwrap();
        prop_assert!((coast_distance(p, &fwd) - coast_distance(p, &rev)).abs() < 1e-9);
    }

    #[test]
    fn densified_vertices_are_close(line in polyline(), p in point()) {
        let coast = Coastline::new(vec![line.clone()], 1.0).unwrap();
        for w in coast.polylines()[0].windows(2) {
            prop_assert!(haversine_km(w[0], w[1]) <= 1.0 + 1e-9);
        }
        // Fine sampling of the original segments never beats the dense
        // vertices by more than half a segment.
        let mut fine = f64::INFINITY;
        for w in line.windows(2) {
            for k in 0..=400 {
                let t = k as f64 / 400.0;
                let q = (w[0].0 + (w[1].0 - w[0].0) * t, w[0].1 + (w[1].1 - w[0].1) * t);
                fine = fine.min(haversine_km(p, q));
            }
        }
        prop_assert!(coast_distance(p, &coast) <= fine + 0.5 + 1e-9);
    }

    #[test]
    fn depth_fallback_stays_in_window_range(vals in prop::collection::vec(prop_oneof![3 => -200.0f64..0.0, 1 => Just(-9999.0)], 25), col in 0usize..5, row in 0usize..5) {
        let t = GeoTransform::new(0.0, 5.0, 1.0, 1.0).unwrap();
        let r = Raster::new(5, 5, t, RasterKind::DbFloat, -9999.0, vals.clone()).unwrap();
        let p = (col as f64 + 0.5, 5.0 - row as f64 - 0.5);
        let got = depth_at(p, &r).unwrap();
        let window: Vec<f64> = (row.saturating_sub(1)..=(row + 1).min(4))
            .flat_map(|rr| (col.saturating_sub(1)..=(col + 1).min(4)).map(move |cc| (rr, cc)))
            .map(|(rr, cc)| vals[rr * 5 + cc])
            .filter(|v| *v != -9999.0)
            .collect();
        match got {
            None => prop_assert!(window.is_empty()),
            Some(d) => {
                let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo - 1e-9 <= d && d <= hi + 1e-9);
                if vals[row * 5 + col] != -9999.0 {
                    prop_assert_eq!(d, vals[row * 5 + col]);
                }
            }
        }
    }

    #[test]
    fn region_assignment_is_exclusive(k in 0usize..3, x in 0.01f64..9.99, y in 0.01f64..9.99) {
        let layer = regions();
        let p = (k as f64 * 20.0 + x, y);
        let hits: Vec<&str> = layer.zones.iter().filter(|z| z.contains(p)).map(|z| z.name.as_str()).collect();
        prop_assert_eq!(hits.len(), 1);
        prop_assert_eq!(assign_zone(p, &layer).unwrap().name.as_str(), ["NS", "PG", "GOM"][k]);
    }

    #[test]
    fn enrichment_is_per_track(pts in prop::collection::vec((0.0f64..55.0, 0.0f64..9.0), 1..10)) {
        let layers = EnrichLayers {
            regions: Some(regions()),
            coastline: Some(Coastline::new(vec![vec![(0.0, 10.0), (60.0, 10.0)]], 1.0).unwrap()),
            ..Default::default()
        };
        let fleet: Vec<PlatformTrack> = pts.iter().map(|&(x, y)| track(x, y)).collect();
        let fwd: Vec<_> = fleet.iter().map(|t| enrich(t, &layers).unwrap()).collect();
        let mut rev: Vec<_> = fleet.iter().rev().map(|t| enrich(t, &layers).unwrap()).collect();
        rev.reverse();
        prop_assert_eq!(&fwd, &rev);
        for (e, t) in fwd.iter().zip(&fleet) {
            prop_assert_eq!(e, &enrich(t, &layers).unwrap());
            let inside = [0.0, 20.0, 40.0].iter().any(|x0| t.center.0 >= *x0 && t.center.0 <= x0 + 10.0);
            prop_assert_eq!(e.region != Region::None, inside);
        }
    }

    #[test]
    fn area_scales_with_cos_lat(lat in -60.0f64..60.0, w in 1e-4f64..1e-2, h in 1e-4f64..1e-2) {
        let b = GeoBox::new(0.0, lat, w, lat + h).unwrap();
        let oracle = w * 111_320.0 * ((lat + h / 2.0).to_radians()).cos() * h * 110_574.0 / 1e4;
        prop_assert!((box_area_ha(&b) - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }
}
