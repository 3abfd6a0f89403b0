//! One function per pipeline stage. Each reads and writes the documented
//! file formats so it can run on its own or as part of `opd run`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use opd_core::analytics::{write_stats, StatsOptions};
use opd_core::consolidate::{consolidate_quarter, ConsolidateConfig};
use opd_core::detection::{detections_from_geojson, detections_to_geojson, ingest_unit, read_chip_dir, read_manifest};
use opd_core::enrich::{enrich, platforms_from_geojson, platforms_to_geojson, Coastline, EnrichLayers, ZoneKind, ZoneLayer};
use opd_core::error::StageExt;
use opd_core::evalkit::{evaluate, predictions_from_features, references_from_features, MatchConfig, MetricsReport};
use opd_core::opd::write_products;
use opd_core::raster::{
    chip_grid, group_scenes, median_composite, quantize, read_ascii_grid_file, read_scene_manifest,
    write_ascii_grid_file, CHIP_SIZE,
};
use opd_core::tracklink::{link_quarters, tracks_from_geojson, tracks_to_geojson};
use opd_core::{Detection, EnrichedPlatform, ExclusionLayer, PlatformTrack, Quarter, QuarterInventory, RasterKind, Stage};

use crate::config::{InputError, LayerPaths, RunConfig};
use crate::manifest::Tracker;

/// Tag a core result as an input problem (exit code 3).
pub fn input<T>(r: opd_core::Result<T>, what: &Path) -> Result<T> {
    r.map_err(|e| InputError(format!("{}: {e}", what.display())).into())
}

pub fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(InputError(format!("{} does not exist", path.display())).into());
    }
    Ok(())
}

pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

/// Files under `dir` (recursively) with the given extension, sorted.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    require(dir)?;
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().and_then(|e| e.to_str()) == Some(ext) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn write(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}

/// Median-composite and quantize every (tile, quarter) of a scene manifest.
/// Writes `composites/<tile>/<quarter>.asc` and `composites.csv`.
pub fn composite(scenes: &Path, out: &Path, pool: &rayon::ThreadPool, tr: &mut Tracker) -> Result<PathBuf> {
    let rows = input(read_scene_manifest(scenes), scenes)?;
    tr.input(scenes);
    for r in &rows {
        require(&r.scene_path)?;
        tr.input(&r.scene_path);
    }
    let units: Vec<((String, Quarter), Vec<PathBuf>)> = group_scenes(&rows).into_iter().collect();
    info!("composite: {} scenes in {} units", rows.len(), units.len());
    let written: Vec<(String, Quarter, PathBuf)> = pool.install(|| {
        units
            .par_iter()
            .map(|((tile, q), paths)| {
                let unit = format!("{tile}/{q}");
                let stack = paths
                    .iter()
                    .map(|p| read_ascii_grid_file(p, RasterKind::DbFloat))
                    .collect::<opd_core::Result<Vec<_>>>()
                    .stage(Stage::Composite, &unit)?;
                let levels = median_composite(&stack).and_then(|c| quantize(&c)).stage(Stage::Composite, &unit)?;
                let rel = Path::new("composites").join(tile).join(format!("{q}.asc"));
                let path = out.join(&rel);
                std::fs::create_dir_all(path.parent().expect("has parent"))?;
                write_ascii_grid_file(&levels, &path).stage(Stage::Composite, &unit)?;
                Ok((tile.clone(), *q, rel))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut csv = String::from("tile_id,quarter,composite_path\n");
    for (tile, q, rel) in &written {
        csv.push_str(&format!("{tile},{q},{}\n", rel.display()));
        tr.output(out.join(rel));
    }
    let index = out.join("composites.csv");
    write(&index, &csv)?;
    tr.output(&index);
    Ok(index)
}

/// `(tile, quarter, absolute composite path)` rows of `composites.csv`.
pub fn read_composite_index(path: &Path) -> Result<Vec<(String, Quarter, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || InputError(format!("{}:{}: expected tile_id,quarter,composite_path", path.display(), i + 1));
        let mut it = line.splitn(3, ',');
        let (Some(t), Some(q), Some(p)) = (it.next(), it.next(), it.next()) else {
            return Err(bad().into());
        };
        let q: Quarter = q.parse().map_err(|_| bad())?;
        rows.push((t.to_string(), q, base.join(p)));
    }
    Ok(rows)
}

/// Chip windows of every composite, written to `chips.csv`. With
/// `rasters`, each padded 640 x 640 chip is also written as
/// `chips/<tile>/<quarter>/<col0>_<row0>.asc`.
pub fn chip(composites: &Path, out: &Path, rasters: bool, pool: &rayon::ThreadPool, tr: &mut Tracker) -> Result<PathBuf> {
    let rows = read_composite_index(composites)?;
    tr.input(composites);
    for (_, _, p) in &rows {
        require(p)?;
        tr.input(p);
    }
    let per_unit: Vec<(String, Vec<PathBuf>)> = pool.install(|| {
        rows.par_iter()
            .map(|(tile, q, p)| {
                let unit = format!("{tile}/{q}");
                let levels = read_ascii_grid_file(p, RasterKind::U8).stage(Stage::Chip, &unit)?;
                let padded = levels.pad_to(CHIP_SIZE);
                let windows = chip_grid(tile, padded.width(), padded.height()).stage(Stage::Chip, &unit)?;
                let mut lines = String::new();
                let mut files = Vec::new();
                for w in &windows {
                    let t = padded.transform();
                    let (w0, n0) = t.pixel_to_geo(w.col0 as f64, w.row0 as f64);
                    let (e0, s0) = t.pixel_to_geo((w.col0 + w.size) as f64, (w.row0 + w.size) as f64);
                    lines.push_str(&format!("{tile},{q},{},{},{},{w0},{s0},{e0},{n0}\n", w.col0, w.row0, w.size));
                    if rasters {
                        let chip = padded.window(w.col0, w.row0, w.size, w.size, 0.0).stage(Stage::Chip, &unit)?;
                        let path = out.join("chips").join(tile).join(q.to_string()).join(format!("{}.asc", w.stem()));
                        std::fs::create_dir_all(path.parent().expect("has parent"))?;
                        write_ascii_grid_file(&chip, &path).stage(Stage::Chip, &unit)?;
                        files.push(path);
                    }
                }
                Ok((lines, files))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut csv = String::from("tile_id,quarter,col0,row0,size,min_lon,min_lat,max_lon,max_lat\n");
    for (lines, files) in per_unit {
        csv.push_str(&lines);
        files.into_iter().for_each(|f| tr.output(f));
    }
    let index = out.join("chips.csv");
    write(&index, &csv)?;
    tr.output(&index);
    Ok(index)
}

/// Build an ingest manifest from a composite index and a chip detection
/// root laid out as `<root>/<tile>/<quarter>/`. Units without a detection
/// directory are skipped with a warning.
pub fn ingest_manifest(composites: &Path, detections: &Path, out: &Path) -> Result<PathBuf> {
    require(detections)?;
    let mut csv = String::from("tile_id,quarter,composite_path,detections_path\n");
    for (tile, q, p) in read_composite_index(composites)? {
        let dir = detections.join(&tile).join(q.to_string());
        if !dir.is_dir() {
            warn!("no detections for {tile}/{q} under {}", detections.display());
            continue;
        }
        let rel = p.strip_prefix(out).unwrap_or(&p);
        let dir = std::path::absolute(&dir)?;
        csv.push_str(&format!("{tile},{q},{},{}\n", rel.display(), dir.display()));
    }
    let path = out.join("ingest.csv");
    write(&path, &csv)?;
    Ok(path)
}

/// Parse chip detections against their composites. Writes
/// `detections/<tile>/<quarter>.geojson` per unit.
pub fn ingest(manifest: &Path, out: &Path, pool: &rayon::ThreadPool, tr: &mut Tracker) -> Result<Vec<PathBuf>> {
    let rows = input(read_manifest(manifest), manifest)?;
    tr.input(manifest);
    for r in &rows {
        require(&r.composite_path)?;
        require(&r.detections_path)?;
    }
    let results: Vec<(PathBuf, Vec<PathBuf>, usize)> = pool.install(|| {
        rows.par_iter()
            .map(|r| {
                let unit = format!("{}/{}", r.tile_id, r.quarter);
                let levels = read_ascii_grid_file(&r.composite_path, RasterKind::U8).stage(Stage::Ingest, &unit)?;
                let chips = read_chip_dir(&r.detections_path, &r.tile_id).stage(Stage::Ingest, &unit)?;
                let got = ingest_unit(&r.tile_id, r.quarter, &levels, &chips).stage(Stage::Ingest, &unit)?;
                for (line, why) in &got.rejected {
                    warn!("ingest {unit}: rejected record at line {line}: {why}");
                }
                if got.clipped_away > 0 {
                    warn!("ingest {unit}: {} boxes vanished after clipping to the tile", got.clipped_away);
                }
                let path = out.join("detections").join(&r.tile_id).join(format!("{}.geojson", r.quarter));
                write(&path, &detections_to_geojson(&got.detections))?;
                let mut read = vec![r.composite_path.clone()];
                read.extend(chips.iter().map(|(w, _)| r.detections_path.join(format!("{}.txt", w.stem()))));
                Ok((path, read, got.detections.len()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let total: usize = results.iter().map(|r| r.2).sum();
    info!("ingest: {total} detections from {} units", results.len());
    let mut written = Vec::new();
    for (path, read, _) in results {
        read.into_iter().for_each(|p| tr.input(p));
        tr.output(&path);
        written.push(path);
    }
    Ok(written)
}

fn read_detection_files(files: &[PathBuf], tr: &mut Tracker) -> Result<Vec<Detection>> {
    let mut all = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(f).map_err(|e| InputError(format!("{}: {e}", f.display())))?;
        all.extend(input(detections_from_geojson(&text), f)?);
        tr.input(f);
    }
    Ok(all)
}

/// Gate, deduplicate, and exclude per quarter across all tiles. Writes
/// `inventory/<quarter>.geojson`.
pub fn consolidate(
    files: &[PathBuf],
    out: &Path,
    cfg: &ConsolidateConfig,
    exclusion: Option<&Path>,
    pool: &rayon::ThreadPool,
    tr: &mut Tracker,
) -> Result<Vec<PathBuf>> {
    let layer = match exclusion {
        Some(p) => {
            tr.input(p);
            input(ExclusionLayer::load(p), p)?
        }
        None => ExclusionLayer::default(),
    };
    let mut by_quarter: BTreeMap<Quarter, Vec<Detection>> = BTreeMap::new();
    for d in read_detection_files(files, tr)? {
        by_quarter.entry(d.quarter).or_default().push(d);
    }
    let units: Vec<(Quarter, Vec<Detection>)> = by_quarter.into_iter().collect();
    let written: Vec<(PathBuf, usize, usize)> = pool.install(|| {
        units
            .par_iter()
            .map(|(q, ds)| {
                let mut ds = ds.clone();
                ds.sort_by(|a, b| a.id.cmp(&b.id));
                let inv = consolidate_quarter(*q, &ds, cfg, &layer).stage(Stage::Consolidate, q.to_string())?;
                let path = out.join("inventory").join(format!("{q}.geojson"));
                write(&path, &detections_to_geojson(&inv.detections))?;
                Ok((path, ds.len(), inv.detections.len()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut paths = Vec::new();
    for (p, before, after) in written {
        info!("consolidate {}: {before} -> {after}", p.file_stem().and_then(|s| s.to_str()).unwrap_or_default());
        tr.output(&p);
        paths.push(p);
    }
    Ok(paths)
}

/// Link quarter inventories into platform tracks; writes `tracks.geojson`.
pub fn link(files: &[PathBuf], out: &Path, iou_min: f64, tr: &mut Tracker) -> Result<PathBuf> {
    let mut invs = Vec::new();
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let quarter: Quarter = stem
            .parse()
            .map_err(|_| InputError(format!("{}: inventory files are named <quarter>.geojson", f.display())))?;
        let detections = read_detection_files(std::slice::from_ref(f), tr)?;
        invs.push(QuarterInventory { quarter, detections });
    }
    let tracks = link_quarters(&invs, iou_min).stage(Stage::Link, "all quarters")?;
    info!("link: {} platforms from {} quarters", tracks.len(), invs.len());
    let path = out.join("tracks.geojson");
    write(&path, &tracks_to_geojson(&tracks))?;
    tr.output(&path);
    Ok(path)
}

pub fn read_tracks(path: &Path, tr: &mut Tracker) -> Result<Vec<PlatformTrack>> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    tr.input(path);
    input(tracks_from_geojson(&text), path)
}

pub fn read_platforms(path: &Path, tr: &mut Tracker) -> Result<Vec<EnrichedPlatform>> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    tr.input(path);
    input(platforms_from_geojson(&text), path)
}

/// Load the configured layers; an unset layer leaves its attribute empty.
pub fn load_layers(paths: &LayerPaths, coast_seg_km: f64, tr: &mut Tracker) -> Result<EnrichLayers> {
    let mut layers = EnrichLayers::default();
    let missing = |name: &str, attr: &str| warn!("{name} layer not configured; {attr} left empty");
    match &paths.regions {
        Some(p) => layers.regions = Some(input(ZoneLayer::load(ZoneKind::Region, p), p)?),
        None => missing("regions", "region (NONE)"),
    }
    match &paths.eez {
        Some(p) => layers.eez = Some(input(ZoneLayer::load(ZoneKind::Eez, p), p)?),
        None => missing("eez", "eez"),
    }
    match &paths.coastline {
        Some(p) => layers.coastline = Some(input(Coastline::load(p, coast_seg_km), p)?),
        None => missing("coastline", "coast_km"),
    }
    match &paths.bathymetry {
        Some(p) => layers.bathymetry = Some(input(read_ascii_grid_file(p, RasterKind::DbFloat), p)?),
        None => missing("bathymetry", "depth_m"),
    }
    for p in [&paths.regions, &paths.eez, &paths.coastline, &paths.bathymetry].into_iter().flatten() {
        tr.input(p);
    }
    Ok(layers)
}

/// Attach spatial attributes to every track; writes `platforms.geojson`.
pub fn enrich_tracks(
    tracks: &[PlatformTrack],
    layers: &EnrichLayers,
    out: &Path,
    pool: &rayon::ThreadPool,
    tr: &mut Tracker,
) -> Result<PathBuf> {
    let fleet: Vec<EnrichedPlatform> = pool.install(|| {
        tracks
            .par_iter()
            .map(|t| enrich(t, layers).stage(Stage::Enrich, &t.platform_id).map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()
    })?;
    let path = out.join("platforms.geojson");
    write(&path, &platforms_to_geojson(&fleet))?;
    tr.output(&path);
    Ok(path)
}

pub fn stats(fleet: &[EnrichedPlatform], out: &Path, opts: &StatsOptions, tr: &mut Tracker) -> Result<()> {
    for p in write_stats(fleet, out.join("stats"), opts).stage(Stage::Stats, "fleet")? {
        tr.output(p);
    }
    Ok(())
}

pub fn export(fleet: &[EnrichedPlatform], out: &Path, tr: &mut Tracker) -> Result<()> {
    for p in write_products(fleet, out.join("opd")).stage(Stage::Export, "fleet")? {
        tr.output(p);
    }
    Ok(())
}

pub fn eval(truth: &Path, pred: &Path, cfg: &MatchConfig, regions: Option<&Path>, tr: &mut Tracker) -> Result<MetricsReport> {
    let features = |p: &Path| input(opd_core::geojson::read_features(p), p);
    let refs = input(references_from_features(&features(truth)?), truth)?;
    let preds = input(predictions_from_features(&features(pred)?), pred)?;
    tr.input(truth);
    tr.input(pred);
    let layer = match regions {
        Some(p) => {
            tr.input(p);
            Some(input(ZoneLayer::load(ZoneKind::Region, p), p)?)
        }
        None => None,
    };
    Ok(evaluate(&preds, &refs, cfg, layer.as_ref()).stage(Stage::Eval, "all")?)
}

/// The full pipeline, composite through export.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, tr: &mut Tracker) -> Result<()> {
    let (Some(scenes), Some(detections)) = (&cfg.scenes, &cfg.detections) else {
        return Err(crate::config::ConfigError("run needs both scenes and detections".into()).into());
    };
    require(scenes)?;
    require(detections)?;
    let l = &cfg.layers;
    for p in [&l.regions, &l.eez, &l.coastline, &l.bathymetry, &l.exclusion].into_iter().flatten() {
        require(p)?;
    }
    std::fs::create_dir_all(out)?;
    let pool = pool(cfg.threads())?;
    info!("run: {} worker threads", pool.current_num_threads());

    let composites = composite(scenes, out, &pool, tr)?;
    chip(&composites, out, false, &pool, tr)?;
    let manifest = ingest_manifest(&composites, detections, out)?;
    tr.output(&manifest);
    let det_files = ingest(&manifest, out, &pool, tr)?;
    let ccfg = ConsolidateConfig { conf_min: cfg.conf, level_min: cfg.level, iou_min: cfg.iou_dedup };
    let inv_files = consolidate(&det_files, out, &ccfg, l.exclusion.as_deref(), &pool, tr)?;
    let tracks_path = link(&inv_files, out, cfg.iou_link, tr)?;
    let tracks = read_tracks(&tracks_path, &mut Tracker::default())?;
    let layers = load_layers(l, cfg.coast_seg_km, tr)?;
    let platforms = enrich_tracks(&tracks, &layers, out, &pool, tr)?;
    let fleet = read_platforms(&platforms, &mut Tracker::default())?;
    stats(&fleet, out, &StatsOptions { presence: cfg.presence, extra_rules: Vec::new() }, tr)?;
    export(&fleet, out, tr)?;
    Ok(())
}
