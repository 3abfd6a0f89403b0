//! Offshore platform inventory from quarterly SAR composites.
//!
//! Stages, in pipeline order:
//!
//! 1. [`raster`]: median compositing of dB scenes, 8-bit quantization,
//!    1.8° tiles and 640 px chip windows.
//! 2. [`detection`]: per-chip model output parsing and georeferencing.
//! 3. [`consolidate`]: confidence/backscatter gates, duplicate grouping,
//!    representative selection, wind-farm exclusion.
//! 4. [`tracklink`]: linking quarters into platforms with lifespans.
//! 5. [`enrich`]: zones, coast distance, water depth, footprint area.
//! 6. [`analytics`]: quarterly counts, distributions, lifespan shares.
//! 7. [`opd`]: product files (all platforms, quarterly, 2025Q1 snapshot).
//!
//! [`evalkit`] scores detections against reference inventories and
//! [`simkit`] generates synthetic scenes with known ground truth.

pub mod error;
pub mod geojson;
pub mod geom;
pub mod kv;
pub mod quarter;
pub mod unionfind;

pub mod analytics;
pub mod consolidate;
pub mod detection;
pub mod enrich;
pub mod evalkit;
pub mod opd;
pub mod raster;
pub mod simkit;
pub mod tracklink;

pub use consolidate::{ExclusionLayer, QuarterInventory};
pub use detection::{Detection, DetectionClass};
pub use enrich::{EnrichedPlatform, Region};

pub use error::{Error, Result, Stage};
pub use geom::{GeoBox, LonLat};
pub use quarter::Quarter;
pub use raster::{ChipWindow, GeoTransform, Raster, RasterKind};
pub use tracklink::{LifespanCategory, PlatformTrack};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
