use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use opd_core::consolidate::group_overlaps;
use opd_core::raster::median_composite;
use opd_core::tracklink::link_quarters;
use opd_core::{Detection, DetectionClass, GeoBox, GeoTransform, Quarter, QuarterInventory, Raster, RasterKind};

/// `n` platforms, each seen as a few jittered boxes, spread over a 1° square.
fn detections(rng: &mut ChaCha8Rng, n: usize, quarter: Quarter) -> Vec<Detection> {
    let mut out = Vec::with_capacity(n * 3);
    for p in 0..n {
        let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        for k in 0..rng.random_range(1..4) {
            let j = rng.random_range(0.0..0.0002);
            out.push(Detection {
                id: format!("{quarter}-{p:05}-{k}"),
                quarter,
                tile_id: "x101y019".into(),
                class: DetectionClass::SinglePlatform,
                confidence: rng.random_range(0.4..1.0),
                bbox: GeoBox::new(x + j, y + j, x + j + 0.001, y + j + 0.001).unwrap(),
                max_level: 200,
            });
        }
    }
    out
}

fn bench_grouping(c: &mut Criterion) {
    let mut g = c.benchmark_group("group_overlaps");
    for n in [100, 1_000, 10_000] {
        let ds = detections(&mut ChaCha8Rng::seed_from_u64(1), n, Quarter::STUDY_FIRST);
        g.throughput(Throughput::Elements(ds.len() as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &ds, |b, ds| b.iter(|| group_overlaps(ds, 0.2)));
    }
    g.finish();
}

fn bench_linking(c: &mut Criterion) {
    let mut g = c.benchmark_group("link_quarters");
    g.sample_size(20);
    for n in [100, 1_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let invs: Vec<QuarterInventory> =
            Quarter::study_window().map(|q| QuarterInventory { quarter: q, detections: detections(&mut rng, n, q) }).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &invs, |b, invs| b.iter(|| link_quarters(invs, 0.1).unwrap()));
    }
    g.finish();
}

fn bench_composite(c: &mut Criterion) {
    let mut g = c.benchmark_group("median_composite");
    g.sample_size(10);
    let t = GeoTransform::new(1.8, 55.8, 0.0001, 0.0001).unwrap();
    for n in [5, 9, 15] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack: Vec<Raster> = (0..n)
            .map(|_| {
                let v = (0..640 * 640).map(|_| rng.random_range(-40.0..0.0)).collect();
                Raster::new(640, 640, t, RasterKind::DbFloat, -9999.0, v).unwrap()
            })
            .collect();
        g.throughput(Throughput::Elements(640 * 640));
        g.bench_with_input(BenchmarkId::new("640x640", n), &stack, |b, s| b.iter(|| median_composite(s).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, bench_grouping, bench_linking, bench_composite);
criterion_main!(benches);
