//! Synthetic scenes with known ground truth: sea clutter, stationary
//! platforms with birth/death quarters and transient ships, plus a
//! perfect detector over the resulting composites.
//!
//! Spec files are flat `key = value` text:
//!
//! ```text
//! seed = 7
//! tile_id = x100y020
//! width = 700                # pixels
//! height = 648
//! origin = 1.5, 56.2         # lon, lat of the north-west corner
//! pixel_deg = 0.0001
//! first_quarter = 2017Q1
//! n_quarters = 33
//! scenes = 5, 9              # scenes per quarter, min and max
//! sea_mean = -26             # dB
//! sea_sd = 2
//! # col, row, width, height, birth, death, brightness dB
//! platform = 100, 120, 12, 10, 2017Q1, 2025Q1, -8
//! # quarter, col, row, width, height, dcol, drow, scenes present, brightness dB
//! ship = 2019Q3, 300, 40, 6, 3, 5, 0, 2, -5
//! ```

mod generate;
mod roundtrip;
mod spec;

pub use generate::{perfect_detector, Blob, Generator, SimQuarter, SimTruth, TruthTrack, DETECTOR_CONFIDENCE};
pub use roundtrip::{verify_roundtrip, write_dataset, RoundtripReport};
pub use spec::{SimPlatform, SimShip, SimSpec, SEA_CLAMP_MAX, SEA_CLAMP_MIN};
