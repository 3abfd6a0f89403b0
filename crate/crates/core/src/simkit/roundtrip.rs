use std::path::{Path, PathBuf};

use super::generate::{Generator, SimTruth};
use super::spec::SimSpec;
use crate::analytics::{quarterly_counts, GroupBy, PresenceMode};
use crate::consolidate::{consolidate_quarter, ConsolidateConfig, ExclusionLayer, QuarterInventory};
use crate::detection::ingest_unit;
use crate::enrich::{enrich, EnrichLayers};
use crate::error::{Result, Stage, StageExt};
use crate::geom::iou;
use crate::quarter::Quarter;
use crate::raster::{median_composite, quantize, write_ascii_grid_file};
use crate::tracklink::{link_quarters, PlatformTrack, IOU_LINK};

/// Minimum IoU between a recovered representative box and its truth box.
const TRUTH_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RoundtripReport {
    pub truth: SimTruth,
    pub tracks: Vec<PlatformTrack>,
    /// Consolidated inventories, one per simulated quarter.
    pub inventories: Vec<QuarterInventory>,
    /// Human-readable differences against the truth; empty when exact.
    pub diffs: Vec<String>,
}

impl RoundtripReport {
    pub fn is_exact(&self) -> bool {
        self.diffs.is_empty()
    }
}

/// Generate every quarter and push it through compositing, quantization,
/// ingest, consolidation, linking and quarterly counting, then diff the
/// result against the generator's truth.
pub fn verify_roundtrip(spec: &SimSpec) -> Result<RoundtripReport> {
    let generator = Generator::new(spec.clone()).stage(Stage::Simulate, &spec.tile_id)?;
    let cfg = ConsolidateConfig::default();
    let no_exclusion = ExclusionLayer::default();
    let mut inventories = Vec::with_capacity(spec.n_quarters);
    for q in spec.quarters() {
        let unit = format!("{}/{q}", spec.tile_id);
        let sim = generator.quarter(q).stage(Stage::Simulate, &unit)?;
        let composite = median_composite(&sim.scenes).stage(Stage::Composite, &unit)?;
        let levels = quantize(&composite).stage(Stage::Composite, &unit)?;
        let ingested = ingest_unit(&spec.tile_id, q, &levels, &sim.chips).stage(Stage::Ingest, &unit)?;
        let inv = consolidate_quarter(q, &ingested.detections, &cfg, &no_exclusion).stage(Stage::Consolidate, &unit)?;
        inventories.push(inv);
    }
    let tracks = link_quarters(&inventories, IOU_LINK).stage(Stage::Link, &spec.tile_id)?;
    let truth = generator.truth();
    let diffs = diff_against_truth(spec, &truth, &tracks)?;
    Ok(RoundtripReport { truth, tracks, inventories, diffs })
}

fn diff_against_truth(spec: &SimSpec, truth: &SimTruth, tracks: &[PlatformTrack]) -> Result<Vec<String>> {
    let mut diffs = Vec::new();
    if tracks.len() != truth.tracks.len() {
        diffs.push(format!("track count {} != truth {}", tracks.len(), truth.tracks.len()));
    }
    let mut used = vec![false; tracks.len()];
    for t in &truth.tracks {
        let hit = tracks.iter().enumerate().find(|(i, r)| !used[*i] && iou(&r.rep_box, &t.bbox) >= TRUTH_MATCH_IOU);
        let Some((i, r)) = hit else {
            diffs.push(format!("platform {} not recovered", t.platform));
            continue;
        };
        used[i] = true;
        if (r.first, r.last) != (t.first, t.last) {
            diffs.push(format!("platform {}: span {}..{} != truth {}..{}", t.platform, r.first, r.last, t.first, t.last));
        }
        let (_, category) = crate::tracklink::lifespan(r);
        if category != t.category {
            diffs.push(format!("platform {}: category {} != truth {}", t.platform, category.name(), t.category.name()));
        }
        let gaps = r.last.index() - r.first.index() + 1 - r.observed.len() as i32;
        if gaps != 0 {
            diffs.push(format!("platform {}: {gaps} unobserved quarters inside its span", t.platform));
        }
    }
    for (i, r) in tracks.iter().enumerate().filter(|(i, _)| !used[*i]) {
        diffs.push(format!("spurious track {i} ({}) at {:?}", r.platform_id, r.center));
    }

    let fleet = tracks.iter().map(|t| enrich(t, &EnrichLayers::default())).collect::<Result<Vec<_>>>()?;
    let series = quarterly_counts(&fleet, GroupBy::Region, PresenceMode::Filled);
    for (k, q) in Quarter::study_window().enumerate() {
        let got: usize = series.iter().map(|s| s.values[k]).sum();
        let want = if spec.quarters().any(|x| x == q) { truth.count_at(q) } else { 0 };
        if got != want {
            diffs.push(format!("{q}: count {got} != truth {want}"));
        }
    }
    Ok(diffs)
}

/// Write a spec's scenes, chip detection files and truth under `dir`:
///
/// - `spec.txt`, `truth.csv`
/// - `scenes.csv` (`tile_id,quarter,scene_path`) and
///   `scenes/<tile>/<quarter>/scene_NN.asc`
/// - `detections/<tile>/<quarter>/<col0>_<row0>.txt`
pub fn write_dataset(spec: &SimSpec, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let generator = Generator::new(spec.clone())?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: &str| -> Result<()> {
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put(dir.join("spec.txt"), &spec.to_text())?;
    put(dir.join("truth.csv"), &generator.truth().to_csv())?;

    let mut manifest = String::from("tile_id,quarter,scene_path\n");
    let mut scene_files = Vec::new();
    for q in spec.quarters() {
        let sim = generator.quarter(q)?;
        let scene_dir = Path::new("scenes").join(&spec.tile_id).join(q.to_string());
        std::fs::create_dir_all(dir.join(&scene_dir))?;
        for (k, scene) in sim.scenes.iter().enumerate() {
            let rel = scene_dir.join(format!("scene_{k:02}.asc"));
            write_ascii_grid_file(scene, dir.join(&rel))?;
            manifest.push_str(&format!("{},{q},{}\n", spec.tile_id, rel.display()));
            scene_files.push(dir.join(&rel));
        }
        let det_dir = dir.join("detections").join(&spec.tile_id).join(q.to_string());
        std::fs::create_dir_all(&det_dir)?;
        for (win, text) in &sim.chips {
            put(det_dir.join(format!("{}.txt", win.stem())), text)?;
        }
    }
    put(dir.join("scenes.csv"), &manifest)?;
    written.extend(scene_files);
    written.sort();
    Ok(written)
}
