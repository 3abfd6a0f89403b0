mod common;

use proptest::prelude::*;

use common::{iou_oracle, max_matching_oracle};
use opd_core::evalkit::{aggregate, match_predictions, MatchConfig, MatchCounts, MatchMode, Metrics, Prediction, Reference};
use opd_core::GeoBox;

fn grid_box() -> impl Strategy<Value = [f64; 4]> {
    (0u32..24, 0u32..24, 1u32..10, 1u32..10).prop_map(|(x, y, w, h)| {
        let (x, y) = (x as f64 / 8.0, y as f64 / 8.0);
        [x, y, x + w as f64 / 8.0, y + h as f64 / 8.0]
    })
}

fn to_box(c: [f64; 4]) -> GeoBox {
    GeoBox::try_from(c).unwrap()
}

type Scored = ([f64; 4], f64);

fn instance(max: usize) -> impl Strategy<Value = (Vec<Scored>, Vec<[f64; 4]>)> {
    (
        prop::collection::vec((grid_box(), (0u32..=10).prop_map(|c| c as f64 / 10.0)), 0..max),
        prop::collection::vec(grid_box(), 0..max),
    )
}

fn preds(raw: &[Scored], shift: f64) -> Vec<Prediction> {
    raw.iter()
        .enumerate()
        .map(|(i, (b, c))| Prediction { id: format!("p{i:02}"), confidence: *c, bbox: to_box(*b).translate(shift, -shift).unwrap() })
        .collect()
}

fn refs(raw: &[[f64; 4]], shift: f64) -> Vec<Reference> {
    raw.iter().map(|b| Reference::Box(to_box(*b).translate(shift, -shift).unwrap())).collect()
}

proptest! {
    #[test]
    fn counts_are_conserved((p, t) in instance(12), conf in prop::option::of(0.1f64..=1.0), iou_min in 0.05f64..=1.0) {
        let cfg = MatchConfig { iou_min, conf_min: conf, mode: MatchMode::Iou };
        let c = match_predictions(&preds(&p, 0.0), &refs(&t, 0.0), &cfg);
        let kept = p.iter().filter(|(_, s)| conf.is_none_or(|m| *s >= m)).count();
        prop_assert_eq!(c.tp + c.fn_, t.len());
        prop_assert_eq!(c.tp + c.fp, kept);
    }

    #[test]
    fn translation_does_not_change_counts((p, t) in instance(12), k in -64i32..64) {
        // Shifts on the 1/8 grid keep every coordinate exact.
        let shift = k as f64 / 8.0;
        let cfg = MatchConfig::default();
        prop_assert_eq!(
            match_predictions(&preds(&p, 0.0), &refs(&t, 0.0), &cfg),
            match_predictions(&preds(&p, shift), &refs(&t, shift), &cfg)
        );
    }

    #[test]
    fn greedy_is_bounded_by_optimum((p, t) in instance(7)) {
        let cfg = MatchConfig::default();
        let kept: Vec<&Scored> = p.iter().filter(|(_, c)| *c >= cfg.conf_min.unwrap()).collect();
        let eligible: Vec<Vec<bool>> = kept.iter().map(|(b, _)| t.iter().map(|r| iou_oracle(*b, *r) >= cfg.iou_min).collect()).collect();
        let best = max_matching_oracle(&eligible);
        let got = match_predictions(&preds(&p, 0.0), &refs(&t, 0.0), &cfg);
        prop_assert!(got.tp <= best);
        if eligible.iter().all(|row| row.iter().filter(|&&e| e).count() <= 1) {
            prop_assert_eq!(got.tp, best);
        }
        // Every greedy match is a maximal matching, so at least half the optimum.
        prop_assert!(2 * got.tp >= best);
    }

    #[test]
    fn point_mode_counts_are_conserved((p, t) in instance(10)) {
        let cfg = MatchConfig { iou_min: 0.3, conf_min: None, mode: MatchMode::PointInBox };
        let points: Vec<Reference> = t.iter().map(|b| Reference::Point(to_box(*b).center())).collect();
        let c = match_predictions(&preds(&p, 0.0), &points, &cfg);
        prop_assert_eq!(c.tp + c.fn_, t.len());
        prop_assert_eq!(c.tp + c.fp, p.len());
    }

    #[test]
    fn metrics_stay_in_unit_range(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let m = Metrics::from_counts(MatchCounts { tp, fp, fn_ });
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12 || m.f1 == 0.0);
    }

    #[test]
    fn micro_pools_counts(regions in prop::collection::vec((0usize..30, 0usize..30, 0usize..30), 1..5)) {
        let named: Vec<(String, MatchCounts)> =
            regions.iter().enumerate().map(|(i, &(tp, fp, fn_))| (format!("R{i}"), MatchCounts { tp, fp, fn_ })).collect();
        let rep = aggregate(&named).unwrap();
        let total = named.iter().fold(MatchCounts::default(), |a, (_, c)| a + *c);
        prop_assert_eq!(rep.micro, Metrics::from_counts(total));
        let mean = rep.per_region.values().map(|m| m.f1).sum::<f64>() / named.len() as f64;
        prop_assert!((rep.macro_f1 - mean).abs() < 1e-12);
    }
}
