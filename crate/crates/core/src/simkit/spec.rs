use std::fmt::Display;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::quarter::Quarter;
use crate::raster::{db_to_u8, GeoTransform, DEFAULT_PIXEL_DEG};

/// Clutter below this level never passes the backscatter gate.
pub const SEA_CLAMP_MAX: f64 = -18.0;
pub const SEA_CLAMP_MIN: f64 = -40.0;
/// Minimum platform brightness.
pub const PLATFORM_DB_MIN: f64 = -16.0;
pub const SEA_MEAN_MAX: f64 = -22.0;
/// Largest platform edge in pixels; keeps every blob inside some chip.
pub const PLATFORM_MAX_PX: usize = 64;
/// Empty pixels required between any two platforms.
pub const PLATFORM_GAP_PX: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimPlatform {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
    pub birth: Quarter,
    pub death: Quarter,
    pub brightness_db: f64,
}

impl SimPlatform {
    pub fn alive(&self, q: Quarter) -> bool {
        self.birth <= q && q <= self.death
    }

    fn too_close(&self, o: &SimPlatform) -> bool {
        let g = PLATFORM_GAP_PX;
        self.col < o.col + o.width + g
            && o.col < self.col + self.width + g
            && self.row < o.row + o.height + g
            && o.row < self.row + self.height + g
    }
}

/// A ship bright in `scenes` scenes of one quarter, moving by
/// (`dcol`, `drow`) pixels between appearances.
#[derive(Debug, Clone, PartialEq)]
pub struct SimShip {
    pub quarter: Quarter,
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
    pub dcol: i64,
    pub drow: i64,
    pub scenes: usize,
    pub brightness_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub seed: u64,
    pub tile_id: String,
    pub width: usize,
    pub height: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_deg: f64,
    pub first_quarter: Quarter,
    pub n_quarters: usize,
    pub scenes_min: usize,
    pub scenes_max: usize,
    pub sea_mean: f64,
    pub sea_sd: f64,
    pub platforms: Vec<SimPlatform>,
    pub ships: Vec<SimShip>,
}

const KEYS: [&str; 13] = [
    "seed",
    "tile_id",
    "width",
    "height",
    "origin",
    "pixel_deg",
    "first_quarter",
    "n_quarters",
    "scenes",
    "sea_mean",
    "sea_sd",
    "platform",
    "ship",
];

fn spec_err(msg: impl Display) -> Error {
    Error::Spec(msg.to_string())
}

fn fields<const N: usize>(value: &str, line: usize, what: &str) -> Result<[String; N]> {
    let parts: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
    parts
        .try_into()
        .map_err(|p: Vec<String>| spec_err(format!("line {line}: {what} needs {N} comma-separated fields, got {}", p.len())))
}

fn num<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| spec_err(format!("line {line}: cannot parse {s:?}")))
}

fn quarter(s: &str, line: usize) -> Result<Quarter> {
    s.parse().map_err(|e| spec_err(format!("line {line}: {e}")))
}

impl SimSpec {
    /// A spec with no platforms or ships on a 640 x 640 tile.
    pub fn empty(seed: u64) -> SimSpec {
        SimSpec {
            seed,
            tile_id: "x100y020".into(),
            width: 640,
            height: 640,
            origin_lon: 0.0,
            origin_lat: 54.0,
            pixel_deg: DEFAULT_PIXEL_DEG,
            first_quarter: Quarter::STUDY_FIRST,
            n_quarters: Quarter::STUDY_LEN,
            scenes_min: 5,
            scenes_max: 9,
            sea_mean: -26.0,
            sea_sd: 2.0,
            platforms: Vec::new(),
            ships: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<SimSpec> {
        let kv = KvFile::parse(text).map_err(spec_err)?;
        kv.check_keys(&KEYS).map_err(spec_err)?;
        let mut s = SimSpec::empty(0);
        let p = |e: Error| spec_err(e);
        s.seed = kv.parsed_or("seed", s.seed).map_err(p)?;
        s.tile_id = kv.get("tile_id").unwrap_or(&s.tile_id).to_string();
        s.width = kv.parsed_or("width", s.width).map_err(p)?;
        s.height = kv.parsed_or("height", s.height).map_err(p)?;
        if let Some((v, line)) = kv.get_all("origin").last() {
            let [lon, lat] = fields::<2>(v, *line, "origin")?;
            s.origin_lon = num(&lon, *line)?;
            s.origin_lat = num(&lat, *line)?;
        }
        s.pixel_deg = kv.parsed_or("pixel_deg", s.pixel_deg).map_err(p)?;
        s.first_quarter = kv.parsed_or("first_quarter", s.first_quarter).map_err(p)?;
        s.n_quarters = kv.parsed_or("n_quarters", s.n_quarters).map_err(p)?;
        if let Some((v, line)) = kv.get_all("scenes").last() {
            let [lo, hi] = fields::<2>(v, *line, "scenes")?;
            s.scenes_min = num(&lo, *line)?;
            s.scenes_max = num(&hi, *line)?;
        }
        s.sea_mean = kv.parsed_or("sea_mean", s.sea_mean).map_err(p)?;
        s.sea_sd = kv.parsed_or("sea_sd", s.sea_sd).map_err(p)?;
        for (v, line) in kv.get_all("platform") {
            let f = fields::<7>(v, line, "platform")?;
            s.platforms.push(SimPlatform {
                col: num(&f[0], line)?,
                row: num(&f[1], line)?,
                width: num(&f[2], line)?,
                height: num(&f[3], line)?,
                birth: quarter(&f[4], line)?,
                death: quarter(&f[5], line)?,
                brightness_db: num(&f[6], line)?,
            });
        }
        for (v, line) in kv.get_all("ship") {
            let f = fields::<9>(v, line, "ship")?;
            s.ships.push(SimShip {
                quarter: quarter(&f[0], line)?,
                col: num(&f[1], line)?,
                row: num(&f[2], line)?,
                width: num(&f[3], line)?,
                height: num(&f[4], line)?,
                dcol: num(&f[5], line)?,
                drow: num(&f[6], line)?,
                scenes: num(&f[7], line)?,
                brightness_db: num(&f[8], line)?,
            });
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<SimSpec> {
        SimSpec::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut kv = KvFile::default();
        kv.push("seed", self.seed);
        kv.push("tile_id", &self.tile_id);
        kv.push("width", self.width);
        kv.push("height", self.height);
        kv.push("origin", format!("{}, {}", self.origin_lon, self.origin_lat));
        kv.push("pixel_deg", self.pixel_deg);
        kv.push("first_quarter", self.first_quarter);
        kv.push("n_quarters", self.n_quarters);
        kv.push("scenes", format!("{}, {}", self.scenes_min, self.scenes_max));
        kv.push("sea_mean", self.sea_mean);
        kv.push("sea_sd", self.sea_sd);
        for p in &self.platforms {
            kv.push(
                "platform",
                format!("{}, {}, {}, {}, {}, {}, {}", p.col, p.row, p.width, p.height, p.birth, p.death, p.brightness_db),
            );
        }
        for s in &self.ships {
            kv.push(
                "ship",
                format!(
                    "{}, {}, {}, {}, {}, {}, {}, {}, {}",
                    s.quarter, s.col, s.row, s.width, s.height, s.dcol, s.drow, s.scenes, s.brightness_db
                ),
            );
        }
        kv.to_text()
    }

    pub fn quarters(&self) -> impl Iterator<Item = Quarter> + '_ {
        let i0 = self.first_quarter.index();
        (0..self.n_quarters as i32).map(move |k| Quarter::from_index(i0 + k))
    }

    pub fn last_quarter(&self) -> Quarter {
        Quarter::from_index(self.first_quarter.index() + self.n_quarters as i32 - 1)
    }

    pub fn transform(&self) -> Result<GeoTransform> {
        GeoTransform::new(self.origin_lon, self.origin_lat, self.pixel_deg, self.pixel_deg)
    }

    /// Check every spec invariant.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(spec_err("tile must be non-empty"));
        }
        self.transform().map_err(spec_err)?;
        if self.n_quarters == 0 || !self.first_quarter.in_study() || !self.last_quarter().in_study() {
            return Err(spec_err(format!(
                "{} quarters from {} leave the study window",
                self.n_quarters, self.first_quarter
            )));
        }
        if self.scenes_min == 0 || self.scenes_min > self.scenes_max {
            return Err(spec_err(format!("bad scene range {}..={}", self.scenes_min, self.scenes_max)));
        }
        if !(self.sea_mean <= SEA_MEAN_MAX && self.sea_mean >= SEA_CLAMP_MIN) {
            return Err(spec_err(format!("sea_mean {} must lie in [-40, -22] dB", self.sea_mean)));
        }
        if !(self.sea_sd >= 0.0 && self.sea_sd.is_finite()) {
            return Err(spec_err(format!("sea_sd {} must be non-negative", self.sea_sd)));
        }
        for (i, p) in self.platforms.iter().enumerate() {
            if p.width == 0 || p.height == 0 || p.width > PLATFORM_MAX_PX || p.height > PLATFORM_MAX_PX {
                return Err(spec_err(format!("platform {i}: size {}x{} not in 1..=64", p.width, p.height)));
            }
            if p.col + p.width > self.width || p.row + p.height > self.height {
                return Err(spec_err(format!("platform {i} leaves the tile")));
            }
            if p.birth > p.death {
                return Err(spec_err(format!("platform {i}: birth {} after death {}", p.birth, p.death)));
            }
            if !(PLATFORM_DB_MIN..=0.0).contains(&p.brightness_db) {
                return Err(spec_err(format!("platform {i}: brightness {} dB not in [-16, 0]", p.brightness_db)));
            }
            if p.death < self.first_quarter || p.birth > self.last_quarter() {
                return Err(spec_err(format!("platform {i} never alive in the simulated quarters")));
            }
            if let Some(j) = self.platforms[..i].iter().position(|o| o.too_close(p)) {
                return Err(spec_err(format!("platforms {j} and {i} are closer than {PLATFORM_GAP_PX} px")));
            }
        }
        for (i, s) in self.ships.iter().enumerate() {
            if s.width == 0 || s.height == 0 || s.col + s.width > self.width || s.row + s.height > self.height {
                return Err(spec_err(format!("ship {i} does not start inside the tile")));
            }
            if !(SEA_CLAMP_MAX..=0.0).contains(&s.brightness_db) {
                return Err(spec_err(format!("ship {i}: brightness {} dB not in [-18, 0]", s.brightness_db)));
            }
            if !self.quarters().any(|q| q == s.quarter) {
                return Err(spec_err(format!("ship {i}: quarter {} not simulated", s.quarter)));
            }
        }
        // Ships may share pixels, so the bound is on their summed presence.
        for q in self.quarters() {
            let k: usize = self.ships.iter().filter(|s| s.quarter == q).map(|s| s.scenes).sum();
            if 2 * k >= self.scenes_min {
                return Err(spec_err(format!(
                    "ships in {q} appear in {k} scenes; fewer than half of {} are required",
                    self.scenes_min
                )));
            }
        }
        debug_assert!(db_to_u8(SEA_CLAMP_MAX).unwrap() < crate::consolidate::LEVEL_MIN);
        Ok(())
    }

    /// A random valid spec for sweeps: up to 50 platforms including
    /// relocations and single-quarter appearances, plus transient ships.
    /// Pixel volume is bounded so each spec simulates quickly.
    pub fn random(seed: u64) -> SimSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let mut s = SimSpec::empty(seed);
        s.tile_id = format!("x{:03}y{:03}", rng.random_range(0..200), rng.random_range(0..100));
        s.origin_lon = rng.random_range(-100.0..50.0f64).round();
        s.origin_lat = rng.random_range(-10.0..60.0f64).round();
        let wide = rng.random_bool(0.4);
        if wide {
            s.width = rng.random_range(641..=760);
            s.height = rng.random_range(560..=700);
            s.n_quarters = rng.random_range(1..=6);
            s.scenes_min = 3;
            s.scenes_max = 5;
        } else {
            s.width = rng.random_range(96..=360);
            s.height = rng.random_range(96..=300);
            s.n_quarters = rng.random_range(1..=Quarter::STUDY_LEN);
            s.scenes_min = rng.random_range(3..=5);
            s.scenes_max = s.scenes_min + rng.random_range(0..=3);
        }
        let offset = rng.random_range(0..=(Quarter::STUDY_LEN - s.n_quarters)) as i32;
        s.first_quarter = Quarter::from_index(offset);
        s.sea_mean = rng.random_range(-30.0..=-22.0);
        s.sea_sd = rng.random_range(0.0..=3.0);

        let qs: Vec<Quarter> = s.quarters().collect();
        let rand_q = |rng: &mut ChaCha8Rng| qs[rng.random_range(0..qs.len())];
        let target = rng.random_range(0..=50usize);
        let mut attempts = 0;
        while s.platforms.len() < target && attempts < 2000 {
            attempts += 1;
            let max_edge = if rng.random_bool(0.2) { PLATFORM_MAX_PX } else { 16 };
            let w = rng.random_range(1..=max_edge).min(s.width);
            let h = rng.random_range(1..=max_edge).min(s.height);
            let col = rng.random_range(0..=s.width - w);
            let row = rng.random_range(0..=s.height - h);
            let (birth, death) = match rng.random_range(0..4) {
                0 => (s.first_quarter, s.last_quarter()),
                1 => {
                    let q = rand_q(&mut rng);
                    (q, q)
                }
                _ => {
                    let (a, b) = (rand_q(&mut rng), rand_q(&mut rng));
                    (a.min(b), a.max(b))
                }
            };
            let p = SimPlatform {
                col,
                row,
                width: w,
                height: h,
                birth,
                death,
                brightness_db: rng.random_range(PLATFORM_DB_MIN..=-2.0),
            };
            if s.platforms.iter().any(|o| o.too_close(&p)) {
                continue;
            }
            // Relocation: the unit reappears nearby right after it ends.
            let relocate = p.death < s.last_quarter() && rng.random_bool(0.25);
            let next = p.death.next();
            s.platforms.push(p.clone());
            if relocate && s.platforms.len() < target {
                let dc = p.width + PLATFORM_GAP_PX + rng.random_range(0..20);
                let moved = SimPlatform {
                    col: if p.col + dc + p.width <= s.width { p.col + dc } else { p.col.saturating_sub(dc) },
                    birth: next,
                    death: if rng.random_bool(0.5) { s.last_quarter() } else { next },
                    ..p
                };
                if moved.col + moved.width <= s.width && !s.platforms.iter().any(|o| o.too_close(&moved)) {
                    s.platforms.push(moved);
                }
            }
        }

        for q in s.quarters().collect::<Vec<_>>() {
            let mut budget = (s.scenes_min - 1) / 2;
            while budget > 0 && rng.random_bool(0.5) {
                let k = rng.random_range(1..=budget);
                budget -= k;
                let w = rng.random_range(2..=12).min(s.width);
                let h = rng.random_range(2..=12).min(s.height);
                s.ships.push(SimShip {
                    quarter: q,
                    col: rng.random_range(0..=s.width - w),
                    row: rng.random_range(0..=s.height - h),
                    width: w,
                    height: h,
                    dcol: rng.random_range(-40..=40),
                    drow: rng.random_range(-40..=40),
                    scenes: k,
                    brightness_db: rng.random_range(-12.0..=-1.0),
                });
            }
        }
        debug_assert!(s.validate().is_ok(), "{:?}", s.validate());
        s
    }
}
