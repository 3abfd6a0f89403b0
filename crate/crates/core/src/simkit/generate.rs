use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::spec::{SimSpec, SEA_CLAMP_MAX, SEA_CLAMP_MIN};
use crate::consolidate::LEVEL_MIN;
use crate::detection::{format_chip_record, DetectionClass};
use crate::error::{Error, Result};
use crate::geom::GeoBox;
use crate::quarter::Quarter;
use crate::raster::{chip_grid, median_composite, quantize, ChipWindow, GeoTransform, Raster, RasterKind, CHIP_SIZE};
use crate::tracklink::LifespanCategory;

pub const DETECTOR_CONFIDENCE: f64 = 0.99;
/// Blobs with more pixels than this are labelled platform clusters.
pub const CLUSTER_MIN_PIXELS: usize = 400;
pub const SCENE_NODATA: f64 = -9999.0;

/// Expected platform track.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    /// Index into the spec's platform list.
    pub platform: usize,
    pub first: Quarter,
    pub last: Quarter,
    pub category: LifespanCategory,
    pub bbox: GeoBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub tracks: Vec<TruthTrack>,
}

impl SimTruth {
    /// Platforms alive in `q`.
    pub fn count_at(&self, q: Quarter) -> usize {
        self.tracks.iter().filter(|t| t.first <= q && q <= t.last).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("platform,first_quarter,last_quarter,category,min_lon,min_lat,max_lon,max_lat\n");
        for t in &self.tracks {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t.platform,
                t.first,
                t.last,
                t.category.name(),
                t.bbox.min_lon(),
                t.bbox.min_lat(),
                t.bbox.max_lon(),
                t.bbox.max_lat()
            ));
        }
        s
    }
}

/// One simulated (tile, quarter) unit.
#[derive(Debug, Clone)]
pub struct SimQuarter {
    pub quarter: Quarter,
    pub scenes: Vec<Raster>,
    /// Median composite in dB.
    pub composite: Raster,
    /// Quantized composite, unpadded.
    pub levels: Raster,
    /// Perfect-detector output per chip of the padded tile.
    pub chips: Vec<(ChipWindow, String)>,
}

/// 8-connected component of super-threshold pixels; bounds are
/// half-open pixel ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blob {
    pub col0: usize,
    pub row0: usize,
    pub col1: usize,
    pub row1: usize,
    pub pixels: usize,
}

pub(crate) fn find_blobs(levels: &Raster, level_min: u8) -> Vec<Blob> {
    let (w, h) = (levels.width(), levels.height());
    let vals = levels.values();
    let hot = |i: usize| vals[i] >= f64::from(level_min);
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !hot(start) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut b = Blob { col0: usize::MAX, row0: usize::MAX, col1: 0, row1: 0, pixels: 0 };
        while let Some(i) = stack.pop() {
            let (c, r) = (i % w, i / w);
            b.col0 = b.col0.min(c);
            b.row0 = b.row0.min(r);
            b.col1 = b.col1.max(c + 1);
            b.row1 = b.row1.max(r + 1);
            b.pixels += 1;
            for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let j = nr * w + nc;
                    if !seen[j] && hot(j) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        blobs.push(b);
    }
    blobs.sort_by_key(|b| (b.row0, b.col0));
    blobs
}

/// Emulate a detector that boxes every super-threshold blob lying wholly
/// inside a chip. `levels` must already be padded to chip size.
pub fn perfect_detector(tile_id: &str, levels: &Raster) -> Result<Vec<(ChipWindow, String)>> {
    if levels.kind() != RasterKind::U8 {
        return Err(Error::InvalidValue("detector needs an 8-bit composite".into()));
    }
    let blobs = find_blobs(levels, LEVEL_MIN);
    let chip = CHIP_SIZE as f64;
    chip_grid(tile_id, levels.width(), levels.height())?
        .into_iter()
        .map(|win| {
            let mut text = String::new();
            for b in &blobs {
                let inside = b.col0 >= win.col0
                    && b.row0 >= win.row0
                    && b.col1 <= win.col0 + CHIP_SIZE
                    && b.row1 <= win.row0 + CHIP_SIZE;
                if !inside {
                    continue;
                }
                let class =
                    if b.pixels > CLUSTER_MIN_PIXELS { DetectionClass::PlatformCluster } else { DetectionClass::SinglePlatform };
                let cx = ((b.col0 + b.col1) as f64 / 2.0 - win.col0 as f64) / chip;
                let cy = ((b.row0 + b.row1) as f64 / 2.0 - win.row0 as f64) / chip;
                let bw = (b.col1 - b.col0) as f64 / chip;
                let bh = (b.row1 - b.row0) as f64 / chip;
                text.push_str(&format_chip_record(class, cx, cy, bw, bh, DETECTOR_CONFIDENCE));
                text.push('\n');
            }
            Ok((win, text))
        })
        .collect()
}

/// Deterministic per-unit generator.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: SimSpec,
    transform: GeoTransform,
}

impl Generator {
    pub fn new(spec: SimSpec) -> Result<Self> {
        spec.validate()?;
        let transform = spec.transform()?;
        Ok(Generator { spec, transform })
    }

    pub fn spec(&self) -> &SimSpec {
        &self.spec
    }

    /// RNG for one (seed, tile, quarter) unit, independent of generation order.
    fn unit_rng(&self, q: Quarter) -> ChaCha8Rng {
        let digest = Sha256::digest(format!("simkit/{}/{}/{q}", self.spec.seed, self.spec.tile_id).as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// Scene stack of one quarter.
    pub fn scenes(&self, q: Quarter) -> Result<Vec<Raster>> {
        let s = &self.spec;
        if !s.quarters().any(|x| x == q) {
            return Err(Error::Spec(format!("quarter {q} is not simulated")));
        }
        let mut rng = self.unit_rng(q);
        let n = rng.random_range(s.scenes_min..=s.scenes_max);
        let sea = Normal::new(s.sea_mean, s.sea_sd).map_err(|e| Error::Spec(e.to_string()))?;
        let (w, h) = (s.width, s.height);

        let mut stacks: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..w * h).map(|_| sea.sample(&mut rng).clamp(SEA_CLAMP_MIN, SEA_CLAMP_MAX)).collect())
            .collect();

        for p in s.platforms.iter().filter(|p| p.alive(q)) {
            for vals in stacks.iter_mut() {
                for r in p.row..p.row + p.height {
                    for c in p.col..p.col + p.width {
                        vals[r * w + c] = (p.brightness_db + rng.random_range(0.0..1.0)).min(0.0);
                    }
                }
            }
        }

        for ship in s.ships.iter().filter(|x| x.quarter == q) {
            let picks = rand::seq::index::sample(&mut rng, n, ship.scenes.min(n));
            for (j, scene) in picks.iter().enumerate() {
                let c0 = (ship.col as i64 + j as i64 * ship.dcol).clamp(0, (w - ship.width) as i64) as usize;
                let r0 = (ship.row as i64 + j as i64 * ship.drow).clamp(0, (h - ship.height) as i64) as usize;
                let vals = &mut stacks[scene];
                for r in r0..r0 + ship.height {
                    for c in c0..c0 + ship.width {
                        vals[r * w + c] = vals[r * w + c].max(ship.brightness_db);
                    }
                }
            }
        }

        stacks
            .into_iter()
            .map(|v| Raster::new(w, h, self.transform, RasterKind::DbFloat, SCENE_NODATA, v))
            .collect()
    }

    /// Scenes, composites and detector output for one quarter.
    pub fn quarter(&self, q: Quarter) -> Result<SimQuarter> {
        let scenes = self.scenes(q)?;
        let composite = median_composite(&scenes)?;
        let levels = quantize(&composite)?;
        let chips = perfect_detector(&self.spec.tile_id, &levels.pad_to(CHIP_SIZE))?;
        Ok(SimQuarter { quarter: q, scenes, composite, levels, chips })
    }

    pub fn truth(&self) -> SimTruth {
        let s = &self.spec;
        let tracks = s
            .platforms
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let first = p.birth.max(s.first_quarter);
                let last = p.death.min(s.last_quarter());
                let (w, n) = self.transform.pixel_to_geo(p.col as f64, p.row as f64);
                let (e, so) = self.transform.pixel_to_geo((p.col + p.width) as f64, (p.row + p.height) as f64);
                TruthTrack {
                    platform: i,
                    first,
                    last,
                    category: LifespanCategory::of_span(first, last),
                    bbox: GeoBox::new(w, so, e, n).expect("platform box has positive size"),
                }
            })
            .collect();
        SimTruth { tracks }
    }
}
