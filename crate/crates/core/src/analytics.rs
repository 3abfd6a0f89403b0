//! Fleet statistics: quarterly counts per region or EEZ, attribute
//! distributions, lifespan shares and turnover, written as plot-ready CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::enrich::{EnrichedPlatform, Region};
use crate::error::{Error, Result};
use crate::quarter::Quarter;
use crate::tracklink::{lifespan, presence, presence_observed, turnover, LifespanCategory, PlatformTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Region,
    Eez,
}

/// Which quarters count as present for a platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PresenceMode {
    /// Every quarter between first and last detection.
    #[default]
    Filled,
    /// Only quarters with a detection.
    Observed,
}

impl PresenceMode {
    pub fn is_present(self, t: &PlatformTrack, q: Quarter) -> bool {
        match self {
            PresenceMode::Filled => presence(t, q),
            PresenceMode::Observed => presence_observed(t, q),
        }
    }
}

impl FromStr for PresenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filled" => Ok(PresenceMode::Filled),
            "observed" => Ok(PresenceMode::Observed),
            _ => Err(Error::InvalidValue(format!("presence mode {s:?} is not filled|observed"))),
        }
    }
}

impl fmt::Display for PresenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresenceMode::Filled => "filled",
            PresenceMode::Observed => "observed",
        })
    }
}

/// Platform count per study quarter for one key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSeries {
    pub key: String,
    /// One entry per quarter, 2017Q1..=2025Q1.
    pub values: Vec<usize>,
}

fn group_key(p: &EnrichedPlatform, by: GroupBy) -> Option<String> {
    match by {
        GroupBy::Region => Some(p.region.code().to_string()),
        GroupBy::Eez => p.eez.clone(),
    }
}

/// Count platforms present per quarter and key. Region grouping always
/// reports NS, PG and GOM (plus NONE when it occurs); EEZ grouping leaves
/// out platforms outside every EEZ.
pub fn quarterly_counts(fleet: &[EnrichedPlatform], by: GroupBy, mode: PresenceMode) -> Vec<CountSeries> {
    let mut keys: Vec<String> = Vec::new();
    if by == GroupBy::Region {
        keys.extend(Region::STUDY.iter().map(|r| r.code().to_string()));
    }
    let extra: BTreeSet<String> = fleet.iter().filter_map(|p| group_key(p, by)).filter(|k| !keys.contains(k)).collect();
    keys.extend(extra);

    keys.into_iter()
        .map(|key| {
            let members: Vec<&EnrichedPlatform> = fleet.iter().filter(|p| group_key(p, by).as_deref() == Some(&key)).collect();
            let values = Quarter::study_window()
                .map(|q| members.iter().filter(|p| mode.is_present(&p.track, q)).count())
                .collect();
            CountSeries { key, values }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    CoastKm,
    DepthM,
    AreaHa,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::CoastKm, Attribute::DepthM, Attribute::AreaHa];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::CoastKm => "coast_km",
            Attribute::DepthM => "depth_m",
            Attribute::AreaHa => "area_ha",
        }
    }

    pub fn of(self, p: &EnrichedPlatform) -> Option<f64> {
        match self {
            Attribute::CoastKm => p.coast_km,
            Attribute::DepthM => p.depth_m,
            Attribute::AreaHa => Some(p.area_ha),
        }
    }

    /// Threshold shares reported by default.
    pub fn default_rules(self) -> Vec<ThresholdRule> {
        let r = |op, value| ThresholdRule { op, value };
        match self {
            Attribute::CoastKm => vec![r(Cmp::Ge, 200.0)],
            // at most 100 m deep
            Attribute::DepthM => vec![r(Cmp::Ge, -100.0)],
            Attribute::AreaHa => vec![r(Cmp::Lt, 5.0), r(Cmp::Ge, 10.0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

/// A `value <op> threshold` predicate for share reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRule {
    pub op: Cmp,
    pub value: f64,
}

impl ThresholdRule {
    pub fn matches(&self, x: f64) -> bool {
        match self.op {
            Cmp::Lt => x < self.value,
            Cmp::Le => x <= self.value,
            Cmp::Gt => x > self.value,
            Cmp::Ge => x >= self.value,
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Cmp::Lt => "lt",
            Cmp::Le => "le",
            Cmp::Gt => "gt",
            Cmp::Ge => "ge",
        };
        write!(f, "{op}_{}", self.value)
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidValue(format!("threshold rule {s:?} is not <lt|le|gt|ge>_<value>"));
        let (op, v) = s.split_once('_').ok_or_else(bad)?;
        let op = match op {
            "lt" => Cmp::Lt,
            "le" => Cmp::Le,
            "gt" => Cmp::Gt,
            "ge" => Cmp::Ge,
            _ => return Err(bad()),
        };
        Ok(ThresholdRule { op, value: v.parse().map_err(|_| bad())? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
    pub shares: Vec<(ThresholdRule, f64)>,
}

/// Percentile by linear interpolation between closest ranks
/// (rank = p * (n - 1)) on sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn stats_of(values: &[f64], rules: &[ThresholdRule]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let shares = rules
        .iter()
        .map(|r| (*r, v.iter().filter(|&&x| r.matches(x)).count() as f64 / n as f64))
        .collect();
    Some(Stats {
        n,
        min: v[0],
        p10: percentile(&v, 0.10),
        p25: percentile(&v, 0.25),
        median: percentile(&v, 0.5),
        p75: percentile(&v, 0.75),
        p90: percentile(&v, 0.90),
        max: v[n - 1],
        mean: v.iter().sum::<f64>() / n as f64,
        shares,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub attribute: Attribute,
    /// Keyed by region code, plus `ALL` over the whole fleet.
    pub per_region: BTreeMap<String, Stats>,
}

pub fn distribution_summary(
    fleet: &[EnrichedPlatform],
    attribute: Attribute,
    rules: &[ThresholdRule],
) -> Result<DistributionSummary> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in fleet {
        if let Some(x) = attribute.of(p) {
            groups.entry(p.region.code().to_string()).or_default().push(x);
            groups.entry("ALL".to_string()).or_default().push(x);
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptySummary(format!("no platform has {}", attribute.name())));
    }
    let per_region = groups
        .into_iter()
        .map(|(k, v)| (k, stats_of(&v, rules).expect("non-empty group")))
        .collect();
    Ok(DistributionSummary { attribute, per_region })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LifespanShares {
    pub n: usize,
    pub short: f64,
    pub medium: f64,
    pub full_span: f64,
}

impl LifespanShares {
    pub fn share(&self, c: LifespanCategory) -> f64 {
        match c {
            LifespanCategory::Short => self.short,
            LifespanCategory::Medium => self.medium,
            LifespanCategory::FullSpan => self.full_span,
        }
    }
}

/// Category shares for one region (`None` = whole fleet). An empty
/// selection gives all-zero shares with `n = 0`.
pub fn lifespan_breakdown(fleet: &[EnrichedPlatform], region: Option<Region>) -> LifespanShares {
    let cats: Vec<LifespanCategory> = fleet
        .iter()
        .filter(|p| region.is_none_or(|r| p.region == r))
        .map(|p| lifespan(&p.track).1)
        .collect();
    let n = cats.len();
    if n == 0 {
        return LifespanShares::default();
    }
    let share = |c: LifespanCategory| cats.iter().filter(|&&x| x == c).count() as f64 / n as f64;
    LifespanShares {
        n,
        short: share(LifespanCategory::Short),
        medium: share(LifespanCategory::Medium),
        full_span: share(LifespanCategory::FullSpan),
    }
}

/// Options for [`write_stats`].
#[derive(Debug, Clone, Default)]
pub struct StatsOptions {
    pub presence: PresenceMode,
    /// Extra threshold rules per attribute on top of the defaults.
    pub extra_rules: Vec<(Attribute, ThresholdRule)>,
}

fn region_keys(fleet: &[EnrichedPlatform]) -> Vec<(String, Option<Region>)> {
    let mut keys: Vec<(String, Option<Region>)> = vec![("ALL".into(), None)];
    let present: BTreeSet<Region> = fleet.iter().map(|p| p.region).collect();
    for r in Region::STUDY.iter().chain(std::iter::once(&Region::None)) {
        if present.contains(r) || Region::STUDY.contains(r) {
            keys.push((r.code().to_string(), Some(*r)));
        }
    }
    keys
}

const SCHEMA: &str = "\
counts_region.csv: quarter (YYYYQn), key (region code NS|PG|GOM|NONE), count (platforms present)
counts_eez.csv: quarter (YYYYQn), key (EEZ country code), count (platforms present)
dist_<attr>.csv: region (code or ALL), n, min, p10, p25, median, p75, p90, max, mean (linear-interpolated percentiles), share_<op>_<value> (fraction of platforms satisfying attr <op> value)
lifespan.csv: region (code or ALL), category (SHORT|MEDIUM|FULL_SPAN), count, share
turnover.csv: region (code or ALL), platforms, installed (first > 2017Q1), removed (last < 2025Q1)
";

/// Write every statistics table into `dir` and return the written paths.
pub fn write_stats(fleet: &[EnrichedPlatform], dir: impl AsRef<Path>, opts: &StatsOptions) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    for (by, name) in [(GroupBy::Region, "counts_region.csv"), (GroupBy::Eez, "counts_eez.csv")] {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["quarter", "key", "count"])?;
        for s in quarterly_counts(fleet, by, opts.presence) {
            for (q, n) in Quarter::study_window().zip(&s.values) {
                w.write_record([q.to_string(), s.key.clone(), n.to_string()])?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    for attr in Attribute::ALL {
        let mut rules = attr.default_rules();
        rules.extend(opts.extra_rules.iter().filter(|(a, _)| *a == attr).map(|(_, r)| *r));
        let summary = match distribution_summary(fleet, attr, &rules) {
            Ok(s) => s,
            Err(Error::EmptySummary(msg)) => {
                log::warn!("skipping dist_{}.csv: {msg}", attr.name());
                continue;
            }
            Err(e) => return Err(e),
        };
        let path = dir.join(format!("dist_{}.csv", attr.name()));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<String> =
            ["region", "n", "min", "p10", "p25", "median", "p75", "p90", "max", "mean"].map(String::from).to_vec();
        header.extend(rules.iter().map(|r| format!("share_{r}")));
        w.write_record(&header)?;
        for (region, s) in &summary.per_region {
            let mut row = vec![region.clone(), s.n.to_string()];
            row.extend([s.min, s.p10, s.p25, s.median, s.p75, s.p90, s.max, s.mean].map(|x| x.to_string()));
            row.extend(s.shares.iter().map(|(_, x)| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        written.push(path);
    }

    let path = dir.join("lifespan.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["region", "category", "count", "share"])?;
    for (key, region) in region_keys(fleet) {
        let shares = lifespan_breakdown(fleet, region);
        for c in LifespanCategory::ALL {
            let share = shares.share(c);
            let count = (share * shares.n as f64).round() as usize;
            w.write_record([key.clone(), c.name().to_string(), count.to_string(), share.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("turnover.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["region", "platforms", "installed", "removed"])?;
    for (key, region) in region_keys(fleet) {
        let tracks: Vec<PlatformTrack> =
            fleet.iter().filter(|p| region.is_none_or(|r| p.region == r)).map(|p| p.track.clone()).collect();
        let t = turnover(&tracks);
        w.write_record([key, tracks.len().to_string(), t.installed.to_string(), t.removed.to_string()])?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("schema.txt");
    std::fs::write(&path, SCHEMA)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::GeoBox;
    use crate::tracklink::TrackMember;

    pub(crate) fn platform(first: &str, last: &str, region: Region, eez: Option<&str>) -> EnrichedPlatform {
        let m = |q: &str| TrackMember {
            quarter: q.parse().unwrap(),
            detection_id: format!("{q}/{first}/{last}/{region}/{eez:?}"),
            bbox: GeoBox::new(0.0, 0.0, 0.001, 0.001).unwrap(),
            confidence: 0.9,
        };
        EnrichedPlatform {
            track: PlatformTrack::from_members(vec![m(first), m(last)]).unwrap(),
            region,
            eez: eez.map(str::to_string),
            coast_km: Some(10.0),
            depth_m: Some(-30.0),
            area_ha: 1.2,
        }
    }

    #[test]
    fn empty_fleet_counts_are_zero() {
        let s = quarterly_counts(&[], GroupBy::Region, PresenceMode::Filled);
        assert_eq!(s.iter().map(|c| c.key.as_str()).collect::<Vec<_>>(), vec!["NS", "PG", "GOM"]);
        assert!(s.iter().all(|c| c.values.len() == 33 && c.values.iter().all(|&v| v == 0)));
    }

    #[test]
    fn full_span_counts_every_quarter() {
        let fleet = [platform("2017Q1", "2025Q1", Region::NorthSea, Some("NO"))];
        let s = quarterly_counts(&fleet, GroupBy::Region, PresenceMode::Filled);
        assert_eq!(s[0].values, vec![1; 33]);
        assert_eq!(s[1].values, vec![0; 33]);
        let e = quarterly_counts(&fleet, GroupBy::Eez, PresenceMode::Filled);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].key, "NO");
    }

    #[test]
    fn observed_mode_skips_gaps() {
        let fleet = [platform("2018Q1", "2018Q4", Region::PersianGulf, None)];
        let filled = quarterly_counts(&fleet, GroupBy::Region, PresenceMode::Filled);
        let observed = quarterly_counts(&fleet, GroupBy::Region, PresenceMode::Observed);
        assert_eq!(filled[1].values.iter().sum::<usize>(), 4);
        assert_eq!(observed[1].values.iter().sum::<usize>(), 2);
    }

    #[test]
    fn percentile_convention() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(percentile(&[7.0], 0.9), 7.0);
        assert!((percentile(&[1.0, 2.0, 3.0, 4.0], 0.1) - 1.3).abs() < 1e-12);
        let s = stats_of(&[5.0], &[]).unwrap();
        assert!([s.min, s.p10, s.p25, s.median, s.p75, s.p90, s.max, s.mean].iter().all(|&x| x == 5.0));
    }

    #[test]
    fn summary_requires_values() {
        let mut p = platform("2017Q1", "2025Q1", Region::NorthSea, None);
        p.depth_m = None;
        assert!(matches!(distribution_summary(&[p], Attribute::DepthM, &[]), Err(Error::EmptySummary(_))));
    }

    #[test]
    fn depth_share_rule() {
        let mut fleet = Vec::new();
        for (i, d) in [-20.0, -50.0, -100.0, -150.0].iter().enumerate() {
            let mut p = platform("2017Q1", &format!("202{i}Q1"), Region::GulfOfMexico, None);
            p.depth_m = Some(*d);
            fleet.push(p);
        }
        let s = distribution_summary(&fleet, Attribute::DepthM, &Attribute::DepthM.default_rules()).unwrap();
        assert_eq!(s.per_region["ALL"].shares[0].1, 0.75);
        assert_eq!(s.per_region["GOM"].n, 4);
        assert_eq!("ge_-100".parse::<ThresholdRule>().unwrap(), Attribute::DepthM.default_rules()[0]);
    }

    #[test]
    fn lifespan_shares() {
        let all_full = [platform("2017Q1", "2025Q1", Region::NorthSea, None)];
        let s = lifespan_breakdown(&all_full, Some(Region::NorthSea));
        assert_eq!((s.n, s.full_span, s.medium, s.short), (1, 1.0, 0.0, 0.0));
        assert_eq!(lifespan_breakdown(&all_full, Some(Region::PersianGulf)).n, 0);
    }
}
