//! Run configuration: a flat `key = value` file plus `--key value`
//! overrides from the command line, which win.

use std::fmt;
use std::path::{Path, PathBuf};

use opd_core::analytics::PresenceMode;
use opd_core::consolidate::{CONF_MIN, IOU_DEDUP, LEVEL_MIN};
use opd_core::evalkit::{EVAL_CONF, EVAL_IOU};
use opd_core::kv::KvFile;
use opd_core::tracklink::IOU_LINK;

/// Bad configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Missing or unreadable input; maps to exit code 3.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input: {}", self.0)
    }
}

impl std::error::Error for InputError {}

pub const PATH_KEYS: [&str; 8] = ["scenes", "detections", "out", "regions", "eez", "coastline", "bathymetry", "exclusion"];
pub const VALUE_KEYS: [&str; 9] =
    ["conf", "level", "iou_dedup", "iou_link", "eval_iou", "eval_conf", "presence", "jobs", "coast_seg_km"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerPaths {
    pub regions: Option<PathBuf>,
    pub eez: Option<PathBuf>,
    pub coastline: Option<PathBuf>,
    pub bathymetry: Option<PathBuf>,
    pub exclusion: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub conf: f64,
    pub level: u8,
    pub iou_dedup: f64,
    pub iou_link: f64,
    pub eval_iou: f64,
    pub eval_conf: f64,
    pub presence: PresenceMode,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
    pub coast_seg_km: f64,
    pub layers: LayerPaths,
    /// Scene manifest CSV (`tile_id,quarter,scene_path`).
    pub scenes: Option<PathBuf>,
    /// Root of `<tile>/<quarter>/<col0>_<row0>.txt` chip detection files.
    pub detections: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            conf: CONF_MIN,
            level: LEVEL_MIN,
            iou_dedup: IOU_DEDUP,
            iou_link: IOU_LINK,
            eval_iou: EVAL_IOU,
            eval_conf: EVAL_CONF,
            presence: PresenceMode::Filled,
            jobs: 0,
            coast_seg_km: opd_core::enrich::DEFAULT_MAX_SEG_KM,
            layers: LayerPaths::default(),
            scenes: None,
            detections: None,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| ConfigError(format!("{key} = {v:?}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<KvFile, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        KvFile::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Apply every key of `kv` in order. Relative paths resolve against `base`.
    pub fn apply(&mut self, kv: &KvFile, base: &Path) -> Result<(), ConfigError> {
        let known: Vec<&str> = PATH_KEYS.iter().chain(VALUE_KEYS.iter()).copied().collect();
        kv.check_keys(&known).map_err(|e| ConfigError(e.to_string()))?;
        for key in kv.keys().collect::<Vec<_>>() {
            let v = kv.get(key).unwrap_or_default();
            let path = || (!v.is_empty()).then(|| base.join(v));
            match key {
                "conf" => self.conf = parse(key, v)?,
                "level" => self.level = parse(key, v)?,
                "iou_dedup" => self.iou_dedup = parse(key, v)?,
                "iou_link" => self.iou_link = parse(key, v)?,
                "eval_iou" => self.eval_iou = parse(key, v)?,
                "eval_conf" => self.eval_conf = parse(key, v)?,
                "presence" => self.presence = parse(key, v)?,
                "jobs" => self.jobs = parse(key, v)?,
                "coast_seg_km" => self.coast_seg_km = parse(key, v)?,
                "scenes" => self.scenes = path(),
                "detections" => self.detections = path(),
                "out" => self.out = path(),
                "regions" => self.layers.regions = path(),
                "eez" => self.layers.eez = path(),
                "coastline" => self.layers.coastline = path(),
                "bathymetry" => self.layers.bathymetry = path(),
                "exclusion" => self.layers.exclusion = path(),
                _ => unreachable!("checked above"),
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, v) in [
            ("conf", self.conf),
            ("iou_dedup", self.iou_dedup),
            ("iou_link", self.iou_link),
            ("eval_iou", self.eval_iou),
            ("eval_conf", self.eval_conf),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError(format!("{k} = {v} must lie in (0, 1]")));
            }
        }
        if !(self.coast_seg_km > 0.0 && self.coast_seg_km.is_finite()) {
            return Err(ConfigError(format!("coast_seg_km = {} must be positive", self.coast_seg_km)));
        }
        Ok(())
    }

    pub fn threads(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Settings that shape outputs, as `(key, value)` in a fixed order.
    /// The output directory and thread count are left out.
    pub fn recorded(&self) -> Vec<(&'static str, String)> {
        let p = |x: &Option<PathBuf>| x.as_ref().map_or_else(String::new, |p| p.display().to_string());
        vec![
            ("conf", self.conf.to_string()),
            ("level", self.level.to_string()),
            ("iou_dedup", self.iou_dedup.to_string()),
            ("iou_link", self.iou_link.to_string()),
            ("eval_iou", self.eval_iou.to_string()),
            ("eval_conf", self.eval_conf.to_string()),
            ("presence", self.presence.to_string()),
            ("coast_seg_km", self.coast_seg_km.to_string()),
            ("scenes", p(&self.scenes)),
            ("detections", p(&self.detections)),
            ("regions", p(&self.layers.regions)),
            ("eez", p(&self.layers.eez)),
            ("coastline", p(&self.layers.coastline)),
            ("bathymetry", p(&self.layers.bathymetry)),
            ("exclusion", p(&self.layers.exclusion)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_pipeline_thresholds() {
        let c = RunConfig::default();
        assert_eq!((c.conf, c.level, c.iou_dedup, c.iou_link), (0.4, 150, 0.2, 0.1));
        assert_eq!((c.eval_iou, c.eval_conf), (0.3, 0.5));
        assert_eq!(c.presence, PresenceMode::Filled);
    }

    #[test]
    fn later_keys_win_and_paths_resolve() {
        let mut c = RunConfig::default();
        let file = KvFile::parse("conf = 0.6\nregions = layers/r.geojson\n").unwrap();
        c.apply(&file, Path::new("/cfg")).unwrap();
        assert_eq!(c.layers.regions.as_deref(), Some(Path::new("/cfg/layers/r.geojson")));
        let mut cli = KvFile::default();
        cli.push("conf", 0.7);
        c.apply(&cli, Path::new("")).unwrap();
        assert_eq!(c.conf, 0.7);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::default();
        for text in ["conf = 0\n", "level = 256\n", "iou_link = 1.5\n", "presence = maybe\n", "colour = red\n"] {
            assert!(c.apply(&KvFile::parse(text).unwrap(), Path::new("")).is_err(), "{text}");
        }
    }
}
