mod config;
mod manifest;
mod stages;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use opd_core::analytics::{Attribute, StatsOptions, ThresholdRule};
use opd_core::consolidate::ConsolidateConfig;
use opd_core::evalkit::{MatchConfig, MatchMode};
use opd_core::kv::KvFile;
use opd_core::simkit::{verify_roundtrip, write_dataset, SimSpec};

use config::{ConfigError, InputError, RunConfig};
use manifest::Tracker;

/// Offshore platform inventory pipeline.
///
/// Every stage reads and writes plain files (ESRI ASCII grids, GeoJSON,
/// CSV), so stages can run one at a time or together through `run`.
/// Exit codes: 0 ok, 2 config error, 3 input error, 4 stage failure.
#[derive(Parser, Debug)]
#[command(name = "opd", version, about, long_about)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Base {
    /// Flat `key = value` config file; command-line flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Worker threads (0 = one per CPU).
    #[arg(long)]
    jobs: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Median-composite and quantize scene stacks per (tile, quarter).
    Composite {
        #[command(flatten)]
        base: Base,
        /// Scene manifest CSV: tile_id,quarter,scene_path.
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the 640 px chip windows of every composite.
    Chip {
        #[command(flatten)]
        base: Base,
        /// composites.csv written by `composite`.
        #[arg(long)]
        composites: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write each padded chip as an ASCII grid.
        #[arg(long)]
        rasters: bool,
    },
    /// Georeference chip detections and attach backscatter levels.
    Ingest {
        #[command(flatten)]
        base: Base,
        /// CSV: tile_id,quarter,composite_path,detections_path.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gate and deduplicate detections per quarter.
    Consolidate {
        #[command(flatten)]
        base: Base,
        /// Directory of detection GeoJSON files written by `ingest`.
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Minimum confidence.
        #[arg(long)]
        conf: Option<String>,
        /// Minimum 8-bit backscatter level inside the box.
        #[arg(long)]
        level: Option<String>,
        /// IoU at or above which detections are duplicates.
        #[arg(long, alias = "iou_dedup")]
        iou_dedup: Option<String>,
        /// Polygons (e.g. wind farms) whose detections are dropped.
        #[arg(long)]
        exclusion: Option<PathBuf>,
    },
    /// Link quarter inventories into platforms with lifespans.
    Link {
        #[command(flatten)]
        base: Base,
        /// Directory of `<quarter>.geojson` inventories.
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// IoU at or above which detections in different quarters link.
        #[arg(long, alias = "iou_link")]
        iou_link: Option<String>,
    },
    /// Attach region, EEZ, coast distance, depth and area.
    Enrich {
        #[command(flatten)]
        base: Base,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        layers: LayerArgs,
    },
    /// Quarterly counts, distributions, lifespan shares and turnover.
    Stats {
        #[command(flatten)]
        base: Base,
        #[arg(long)]
        platforms: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `filled` (first to last quarter) or `observed`.
        #[arg(long)]
        presence: Option<String>,
        /// Extra share rule such as `depth_m:ge_-50`; repeatable.
        #[arg(long = "rule")]
        rules: Vec<String>,
    },
    /// Score predictions against a reference inventory.
    Eval {
        #[command(flatten)]
        base: Base,
        /// Reference features (boxes or points).
        #[arg(long)]
        truth: PathBuf,
        /// Predicted boxes with optional `confidence` and `id` properties.
        #[arg(long)]
        pred: PathBuf,
        /// Minimum IoU for a match.
        #[arg(long)]
        iou: Option<String>,
        /// Minimum prediction confidence.
        #[arg(long)]
        conf: Option<String>,
        /// Keep every prediction regardless of confidence.
        #[arg(long, conflicts_with = "conf")]
        all_preds: bool,
        /// Match when the reference point or box centre lies in the prediction.
        #[arg(long)]
        point_in_box: bool,
        /// Region polygons for per-region scores.
        #[arg(long)]
        by_region: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the three product CSVs with GeoJSON sidecars.
    Export {
        #[command(flatten)]
        base: Base,
        #[arg(long)]
        platforms: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with known ground truth.
    Simulate {
        /// Simulation spec file.
        #[arg(long, conflicts_with = "seed")]
        spec: Option<PathBuf>,
        /// Draw a random spec from this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also run the in-memory pipeline and compare against the truth.
        #[arg(long)]
        verify: bool,
    },
    /// Full pipeline: composite, chip, ingest, consolidate, link, enrich,
    /// stats, export.
    Run(Box<RunArgs>),
}

#[derive(Args, Debug, Default)]
struct LayerArgs {
    /// Study region polygons (NS, PG, GOM).
    #[arg(long)]
    regions: Option<PathBuf>,
    /// EEZ polygons.
    #[arg(long)]
    eez: Option<PathBuf>,
    /// Coastline lines or polygons.
    #[arg(long)]
    coastline: Option<PathBuf>,
    /// Bathymetry ASCII grid in metres, negative below sea level.
    #[arg(long)]
    bathymetry: Option<PathBuf>,
    /// Maximum coastline vertex spacing in km.
    #[arg(long, alias = "coast_seg_km")]
    coast_seg_km: Option<String>,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[command(flatten)]
    base: Base,
    /// Scene manifest CSV: tile_id,quarter,scene_path.
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Root of `<tile>/<quarter>/<col0>_<row0>.txt` chip detections.
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    conf: Option<String>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long, alias = "iou_dedup")]
    iou_dedup: Option<String>,
    #[arg(long, alias = "iou_link")]
    iou_link: Option<String>,
    #[arg(long, alias = "eval_iou")]
    eval_iou: Option<String>,
    #[arg(long, alias = "eval_conf")]
    eval_conf: Option<String>,
    /// `filled` or `observed`.
    #[arg(long)]
    presence: Option<String>,
    #[arg(long)]
    exclusion: Option<PathBuf>,
    #[command(flatten)]
    layers: LayerArgs,
}

/// Config file (if any) with command-line overrides applied on top.
fn settings(base: &Base, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &base.config {
        let kv = RunConfig::load(path)?;
        cfg.apply(&kv, path.parent().unwrap_or(Path::new("")))?;
    }
    let mut cli = KvFile::default();
    for (k, v) in flags.iter().chain(std::iter::once(&("jobs", base.jobs.clone()))) {
        if let Some(v) = v {
            cli.push(*k, v);
        }
    }
    cfg.apply(&cli, Path::new(""))?;
    Ok(cfg)
}

fn path_flag(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn layer_flags(l: &LayerArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("regions", path_flag(&l.regions)),
        ("eez", path_flag(&l.eez)),
        ("coastline", path_flag(&l.coastline)),
        ("bathymetry", path_flag(&l.bathymetry)),
        ("coast_seg_km", l.coast_seg_km.clone()),
    ]
}

fn parse_rule(s: &str) -> Result<(Attribute, ThresholdRule)> {
    let bad = || ConfigError(format!("rule {s:?} is not <attribute>:<lt|le|gt|ge>_<value>"));
    let (a, r) = s.split_once(':').ok_or_else(bad)?;
    let attr = Attribute::ALL.into_iter().find(|x| x.name() == a).ok_or_else(bad)?;
    Ok((attr, r.parse().map_err(|_| bad())?))
}

fn execute(cmd: Command) -> Result<()> {
    let mut tr = Tracker::default();
    match cmd {
        Command::Composite { base, scenes, out } => {
            let cfg = settings(&base, &[])?;
            std::fs::create_dir_all(&out)?;
            stages::composite(&scenes, &out, &stages::pool(cfg.threads())?, &mut tr)?;
            tr.write(&out, "composite", &cfg.recorded())?;
        }
        Command::Chip { base, composites, out, rasters } => {
            let cfg = settings(&base, &[])?;
            std::fs::create_dir_all(&out)?;
            stages::chip(&composites, &out, rasters, &stages::pool(cfg.threads())?, &mut tr)?;
            tr.write(&out, "chip", &cfg.recorded())?;
        }
        Command::Ingest { base, manifest, out } => {
            let cfg = settings(&base, &[])?;
            std::fs::create_dir_all(&out)?;
            stages::ingest(&manifest, &out, &stages::pool(cfg.threads())?, &mut tr)?;
            tr.write(&out, "ingest", &cfg.recorded())?;
        }
        Command::Consolidate { base, detections, out, conf, level, iou_dedup, exclusion } => {
            let flags = [("conf", conf), ("level", level), ("iou_dedup", iou_dedup), ("exclusion", path_flag(&exclusion))];
            let cfg = settings(&base, &flags)?;
            let files = stages::list_files(&detections, "geojson")?;
            std::fs::create_dir_all(&out)?;
            let ccfg = ConsolidateConfig { conf_min: cfg.conf, level_min: cfg.level, iou_min: cfg.iou_dedup };
            let pool = stages::pool(cfg.threads())?;
            stages::consolidate(&files, &out, &ccfg, cfg.layers.exclusion.as_deref(), &pool, &mut tr)?;
            tr.write(&out, "consolidate", &cfg.recorded())?;
        }
        Command::Link { base, inventory, out, iou_link } => {
            let cfg = settings(&base, &[("iou_link", iou_link)])?;
            let files = stages::list_files(&inventory, "geojson")?;
            std::fs::create_dir_all(&out)?;
            stages::link(&files, &out, cfg.iou_link, &mut tr)?;
            tr.write(&out, "link", &cfg.recorded())?;
        }
        Command::Enrich { base, tracks, out, layers } => {
            let cfg = settings(&base, &layer_flags(&layers))?;
            let t = stages::read_tracks(&tracks, &mut tr)?;
            let l = stages::load_layers(&cfg.layers, cfg.coast_seg_km, &mut tr)?;
            std::fs::create_dir_all(&out)?;
            stages::enrich_tracks(&t, &l, &out, &stages::pool(cfg.threads())?, &mut tr)?;
            tr.write(&out, "enrich", &cfg.recorded())?;
        }
        Command::Stats { base, platforms, out, presence, rules } => {
            let cfg = settings(&base, &[("presence", presence)])?;
            let extra_rules = rules.iter().map(|r| parse_rule(r)).collect::<Result<Vec<_>>>()?;
            let fleet = stages::read_platforms(&platforms, &mut tr)?;
            std::fs::create_dir_all(&out)?;
            stages::stats(&fleet, &out, &StatsOptions { presence: cfg.presence, extra_rules }, &mut tr)?;
            tr.write(&out, "stats", &cfg.recorded())?;
        }
        Command::Eval { base, truth, pred, iou, conf, all_preds, point_in_box, by_region, out } => {
            let cfg = settings(&base, &[("eval_iou", iou), ("eval_conf", conf)])?;
            let mcfg = MatchConfig {
                iou_min: cfg.eval_iou,
                conf_min: (!all_preds).then_some(cfg.eval_conf),
                mode: if point_in_box { MatchMode::PointInBox } else { MatchMode::Iou },
            };
            let report = stages::eval(&truth, &pred, &mcfg, by_region.as_deref(), &mut tr)?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                std::fs::create_dir_all(dir)?;
                std::fs::write(&path, report.to_json() + "\n")?;
                tr.output(&path);
                tr.write(dir, "eval", &cfg.recorded())?;
            }
        }
        Command::Export { base, platforms, out } => {
            let cfg = settings(&base, &[])?;
            let fleet = stages::read_platforms(&platforms, &mut tr)?;
            std::fs::create_dir_all(&out)?;
            stages::export(&fleet, &out, &mut tr)?;
            tr.write(&out, "export", &cfg.recorded())?;
        }
        Command::Simulate { spec, seed, out, verify } => {
            let spec = match (spec, seed) {
                (Some(p), _) => {
                    tr.input(&p);
                    SimSpec::load(&p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
                }
                (None, Some(s)) => SimSpec::random(s),
                (None, None) => bail!(ConfigError("simulate needs --spec or --seed".into())),
            };
            let files = write_dataset(&spec, &out).map_err(|e| e.at_stage(opd_core::Stage::Simulate, &spec.tile_id))?;
            info!("simulate: {} platforms, {} quarters, {} files", spec.platforms.len(), spec.n_quarters, files.len());
            files.into_iter().for_each(|f| tr.output(f));
            if verify {
                let report = verify_roundtrip(&spec)?;
                for d in &report.diffs {
                    warn!("roundtrip: {d}");
                }
                if !report.is_exact() {
                    bail!(opd_core::Error::Spec(format!("{} roundtrip diffs", report.diffs.len()))
                        .at_stage(opd_core::Stage::Simulate, &spec.tile_id));
                }
                info!("roundtrip exact: {} tracks", report.tracks.len());
            }
            tr.write(&out, "simulate", &[("seed", spec.seed.to_string()), ("tile_id", spec.tile_id.clone())])?;
        }
        Command::Run(a) => {
            let mut flags = vec![
                ("scenes", path_flag(&a.scenes)),
                ("detections", path_flag(&a.detections)),
                ("out", path_flag(&a.out)),
                ("conf", a.conf.clone()),
                ("level", a.level.clone()),
                ("iou_dedup", a.iou_dedup.clone()),
                ("iou_link", a.iou_link.clone()),
                ("eval_iou", a.eval_iou.clone()),
                ("eval_conf", a.eval_conf.clone()),
                ("presence", a.presence.clone()),
                ("exclusion", path_flag(&a.exclusion)),
            ];
            flags.extend(layer_flags(&a.layers));
            let cfg = settings(&a.base, &flags)?;
            let Some(out) = cfg.out.clone() else {
                bail!(ConfigError("run needs an output directory (out)".into()));
            };
            stages::run_pipeline(&cfg, &out, &mut tr)?;
            tr.write(&out, "run", &cfg.recorded())?;
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<InputError>() {
            return 3;
        }
        if let Some(opd_core::Error::Stage { .. }) = cause.downcast_ref::<opd_core::Error>() {
            return 4;
        }
    }
    4
}

fn init_logging(level: &str) {
    env_logger::Builder::new()
        .parse_filters(level)
        .parse_default_env()
        .format(|buf, rec| writeln!(buf, "{}\t{}\t{}", rec.level(), rec.target(), rec.args()))
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.log_level);
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            error!("{e:#}");
            ExitCode::from(code)
        }
    }
}
