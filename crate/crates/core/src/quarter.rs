//! Calendar quarters and the 2017Q1..2025Q1 study window.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar quarter, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quarter {
    year: i32,
    q: u8,
}

impl Quarter {
    /// First quarter of the study window (index 0).
    pub const STUDY_FIRST: Quarter = Quarter { year: 2017, q: 1 };
    /// Last quarter of the study window (index 32).
    pub const STUDY_LAST: Quarter = Quarter { year: 2025, q: 1 };
    /// Number of quarters in the study window.
    pub const STUDY_LEN: usize = 33;

    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::InvalidValue(format!("quarter number {q} not in 1..=4")));
        }
        Ok(Quarter { year, q })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn q(self) -> u8 {
        self.q
    }

    /// Signed offset from 2017Q1.
    pub fn index(self) -> i32 {
        (self.year - 2017) * 4 + i32::from(self.q) - 1
    }

    pub fn from_index(index: i32) -> Self {
        let year = 2017 + index.div_euclid(4);
        let q = index.rem_euclid(4) as u8 + 1;
        Quarter { year, q }
    }

    pub fn next(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn in_study(self) -> bool {
        (Self::STUDY_FIRST..=Self::STUDY_LAST).contains(&self)
    }

    /// All 33 quarters of the study window in order.
    pub fn study_window() -> impl Iterator<Item = Quarter> {
        (0..Self::STUDY_LEN as i32).map(Quarter::from_index)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, q) = s
            .split_once(['Q', 'q'])
            .ok_or_else(|| Error::InvalidValue(format!("quarter {s:?} is not YYYYQn")))?;
        let year = y
            .trim()
            .parse::<i32>()
            .map_err(|_| Error::InvalidValue(format!("quarter {s:?} has a bad year")))?;
        let q = q
            .trim()
            .parse::<u8>()
            .map_err(|_| Error::InvalidValue(format!("quarter {s:?} has a bad quarter number")))?;
        Quarter::new(year, q)
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_window_has_33_quarters() {
        assert_eq!(Quarter::STUDY_FIRST.index(), 0);
        assert_eq!(Quarter::STUDY_LAST.index(), 32);
        let all: Vec<_> = Quarter::study_window().collect();
        assert_eq!(all.len(), 33);
        assert_eq!(all[0], Quarter::STUDY_FIRST);
        assert_eq!(all[32], Quarter::STUDY_LAST);
        assert!(all.windows(2).all(|w| w[0] < w[1] && w[1].index() == w[0].index() + 1));
    }

    #[test]
    fn parse_and_format() {
        let q: Quarter = "2019Q3".parse().unwrap();
        assert_eq!(q, Quarter::new(2019, 3).unwrap());
        assert_eq!(q.to_string(), "2019Q3");
        assert_eq!(Quarter::from_index(q.index()), q);
        assert!("2019Q5".parse::<Quarter>().is_err());
        assert!("2019".parse::<Quarter>().is_err());
        assert_eq!(Quarter::from_index(-1).to_string(), "2016Q4");
    }
}
