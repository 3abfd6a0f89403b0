//! Platform product files: all platforms, platform-quarters and the 2025Q1
//! snapshot, as CSV with GeoJSON point sidecars.
//!
//! Header: `platform_id,first_quarter,last_quarter,coast_km,depth_m,area_ha,eez,region,lon,lat`;
//! the quarterly product prepends a `quarter` column. Missing values are
//! empty fields.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::enrich::{EnrichedPlatform, Region};
use crate::error::{Error, Result};
use crate::geojson::{self, Feature, Geometry};
use crate::kv::KvFile;
use crate::quarter::Quarter;
use crate::tracklink::{LifespanCategory, Turnover};

pub const COLUMNS: [&str; 10] =
    ["platform_id", "first_quarter", "last_quarter", "coast_km", "depth_m", "area_ha", "eez", "region", "lon", "lat"];
pub const QUARTER_COLUMN: &str = "quarter";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Product {
    All,
    Quarterly,
    Snapshot,
}

impl Product {
    pub const ALL_PRODUCTS: [Product; 3] = [Product::All, Product::Quarterly, Product::Snapshot];

    pub fn file_stem(self) -> &'static str {
        match self {
            Product::All => "opd_all",
            Product::Quarterly => "opd_quarterly",
            Product::Snapshot => "opd_snapshot",
        }
    }

    fn columns(self) -> Vec<&'static str> {
        let mut c = Vec::new();
        if self == Product::Quarterly {
            c.push(QUARTER_COLUMN);
        }
        c.extend(COLUMNS);
        c
    }
}

impl fmt::Display for Product {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Product::All => "ALL",
            Product::Quarterly => "QUARTERLY",
            Product::Snapshot => "SNAPSHOT",
        })
    }
}

impl FromStr for Product {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ALL" => Ok(Product::All),
            "QUARTERLY" => Ok(Product::Quarterly),
            "SNAPSHOT" => Ok(Product::Snapshot),
            _ => Err(Error::InvalidValue(format!("unknown product {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpdRecord {
    pub platform_id: String,
    pub first_quarter: Quarter,
    pub last_quarter: Quarter,
    pub coast_km: Option<f64>,
    pub depth_m: Option<f64>,
    pub area_ha: f64,
    pub eez: Option<String>,
    pub region: Region,
    pub lon: f64,
    pub lat: f64,
}

impl OpdRecord {
    /// `None` for platforms outside the three study regions.
    pub fn from_platform(p: &EnrichedPlatform) -> Option<OpdRecord> {
        if p.region == Region::None {
            return None;
        }
        Some(OpdRecord {
            platform_id: p.track.platform_id.clone(),
            first_quarter: p.track.first,
            last_quarter: p.track.last,
            coast_km: p.coast_km,
            depth_m: p.depth_m,
            area_ha: p.area_ha,
            eez: p.eez.clone(),
            region: p.region,
            lon: p.track.center.0,
            lat: p.track.center.1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidValue(format!("{}: {m}", self.platform_id)));
        if self.platform_id.is_empty() {
            return bad("empty platform_id".into());
        }
        if !self.first_quarter.in_study() || !self.last_quarter.in_study() || self.first_quarter > self.last_quarter {
            return bad(format!("quarters {}..{} outside the study window", self.first_quarter, self.last_quarter));
        }
        if self.region == Region::None {
            return bad("region must be NS, PG or GOM".into());
        }
        if !(self.area_ha.is_finite() && self.area_ha >= 0.0) {
            return bad(format!("area_ha {}", self.area_ha));
        }
        if self.coast_km.is_some_and(|c| !(c.is_finite() && c >= 0.0)) || self.depth_m.is_some_and(|d| !d.is_finite()) {
            return bad("non-finite coast or depth".into());
        }
        if !(self.lon.is_finite() && self.lat.is_finite() && self.lon.abs() <= 180.0 && self.lat.abs() <= 90.0) {
            return bad(format!("position ({}, {})", self.lon, self.lat));
        }
        Ok(())
    }

    pub fn duration_quarters(&self) -> usize {
        (self.last_quarter.index() - self.first_quarter.index() + 1) as usize
    }

    pub fn category(&self) -> LifespanCategory {
        LifespanCategory::of_span(self.first_quarter, self.last_quarter)
    }

    pub fn present(&self, q: Quarter) -> bool {
        self.first_quarter <= q && q <= self.last_quarter
    }

    fn fields(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        vec![
            self.platform_id.clone(),
            self.first_quarter.to_string(),
            self.last_quarter.to_string(),
            opt(self.coast_km),
            opt(self.depth_m),
            self.area_ha.to_string(),
            self.eez.clone().unwrap_or_default(),
            self.region.code().to_string(),
            self.lon.to_string(),
            self.lat.to_string(),
        ]
    }

    fn to_feature(&self, quarter: Option<Quarter>) -> Feature {
        let mut props = Map::new();
        if let Some(q) = quarter {
            props.insert(QUARTER_COLUMN.into(), q.to_string().into());
        }
        let num = |x: Option<f64>| x.map_or(Value::Null, Value::from);
        props.insert("platform_id".into(), self.platform_id.clone().into());
        props.insert("first_quarter".into(), self.first_quarter.to_string().into());
        props.insert("last_quarter".into(), self.last_quarter.to_string().into());
        props.insert("coast_km".into(), num(self.coast_km));
        props.insert("depth_m".into(), num(self.depth_m));
        props.insert("area_ha".into(), self.area_ha.into());
        props.insert("eez".into(), self.eez.clone().map_or(Value::Null, Value::from));
        props.insert("region".into(), self.region.code().into());
        Feature::new(Geometry::Point((self.lon, self.lat)), props)
    }
}

/// One product row; `quarter` is set only for the quarterly product.
#[derive(Debug, Clone, PartialEq)]
pub struct OpdRow {
    pub quarter: Option<Quarter>,
    pub record: OpdRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpdTable {
    pub rows: Vec<OpdRow>,
    /// (1-based line, reason) for rows that failed validation.
    pub invalid: Vec<(usize, String)>,
}

impl OpdTable {
    pub fn records(&self) -> impl Iterator<Item = &OpdRecord> {
        self.rows.iter().map(|r| &r.record)
    }
}

/// Maps file column names onto canonical ones. Canonical names match
/// case-insensitively without an entry. Alias files hold
/// `<file column> = <canonical column>` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnAliases {
    map: BTreeMap<String, String>,
}

impl ColumnAliases {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        let mut map = BTreeMap::new();
        for k in kv.keys() {
            let canonical = kv.get(k).unwrap_or_default();
            if canonical != QUARTER_COLUMN && !COLUMNS.contains(&canonical) {
                return Err(Error::Schema { msg: format!("alias {k:?} targets unknown column {canonical:?}"), found: vec![] });
            }
            map.insert(k.to_ascii_lowercase(), canonical.to_string());
        }
        Ok(ColumnAliases { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, file_column: &str, canonical: &str) {
        self.map.insert(file_column.to_ascii_lowercase(), canonical.to_string());
    }

    fn resolve(&self, column: &str) -> Option<&str> {
        let lc = column.trim().to_ascii_lowercase();
        if let Some(c) = self.map.get(&lc) {
            return Some(c.as_str());
        }
        std::iter::once(QUARTER_COLUMN).chain(COLUMNS).find(|c| *c == lc)
    }
}

fn parse_row(fields: &BTreeMap<&str, &str>, product: Product) -> Result<OpdRow> {
    let get = |k: &str| fields.get(k).map(|s| s.trim()).unwrap_or_default();
    let opt_f64 = |k: &str| -> Result<Option<f64>> {
        let s = get(k);
        if s.is_empty() || s.eq_ignore_ascii_case("nan") {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::InvalidValue(format!("{k} {s:?} is not a number")))
    };
    let req_f64 = |k: &str| opt_f64(k)?.ok_or_else(|| Error::InvalidValue(format!("{k} is empty")));
    let quarter = |k: &str| get(k).parse::<Quarter>();
    let eez = Some(get("eez")).filter(|s| !s.is_empty()).map(str::to_string);
    let record = OpdRecord {
        platform_id: get("platform_id").to_string(),
        first_quarter: quarter("first_quarter")?,
        last_quarter: quarter("last_quarter")?,
        coast_km: opt_f64("coast_km")?,
        depth_m: opt_f64("depth_m")?,
        area_ha: req_f64("area_ha")?,
        eez,
        region: get("region").parse()?,
        lon: req_f64("lon")?,
        lat: req_f64("lat")?,
    };
    record.validate()?;
    let quarter = match product {
        Product::Quarterly => {
            let q = quarter(QUARTER_COLUMN)?;
            if !record.present(q) {
                return Err(Error::InvalidValue(format!("quarter {q} outside the platform's span")));
            }
            Some(q)
        }
        _ => None,
    };
    Ok(OpdRow { quarter, record })
}

/// Read one product CSV. Rows failing validation are counted in
/// `invalid`, not returned.
pub fn read_opd(path: impl AsRef<Path>, product: Product, aliases: &ColumnAliases) -> Result<OpdTable> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let schema_err = |msg: String| Error::Schema { msg, found: header.clone() };
    let mut canonical = Vec::with_capacity(header.len());
    for h in &header {
        match aliases.resolve(h) {
            Some(c) if canonical.contains(&c) => return Err(schema_err(format!("column {c:?} appears twice"))),
            Some(c) => canonical.push(c),
            None => return Err(schema_err(format!("unknown column {h:?}"))),
        }
    }
    for need in product.columns() {
        if !canonical.contains(&need) {
            return Err(schema_err(format!("missing column {need:?} for {product} product")));
        }
    }
    let mut table = OpdTable::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let fields: BTreeMap<&str, &str> = canonical.iter().copied().zip(rec.iter()).collect();
        match parse_row(&fields, product) {
            Ok(row) => table.rows.push(row),
            Err(e) => table.invalid.push((line, e.to_string())),
        }
    }
    if !table.invalid.is_empty() {
        log::warn!("{}: {} invalid rows skipped", path.display(), table.invalid.len());
    }
    Ok(table)
}

/// Product rows for a fleet, sorted by platform id (then quarter).
pub fn product_rows(fleet: &[EnrichedPlatform], product: Product) -> Vec<OpdRow> {
    let mut recs: Vec<OpdRecord> = fleet.iter().filter_map(OpdRecord::from_platform).collect();
    recs.sort_by(|a, b| a.platform_id.cmp(&b.platform_id));
    match product {
        Product::All => recs.into_iter().map(|record| OpdRow { quarter: None, record }).collect(),
        Product::Snapshot => recs
            .into_iter()
            .filter(|r| r.present(Quarter::STUDY_LAST))
            .map(|record| OpdRow { quarter: None, record })
            .collect(),
        Product::Quarterly => recs
            .into_iter()
            .flat_map(|record| {
                Quarter::study_window()
                    .filter(|q| record.present(*q))
                    .map(|q| OpdRow { quarter: Some(q), record: record.clone() })
                    .collect::<Vec<_>>()
            })
            .collect(),
    }
}

/// Write the three CSV products and their GeoJSON sidecars. Platforms
/// outside every study region are left out and counted in the log.
pub fn write_products(fleet: &[EnrichedPlatform], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let outside = fleet.iter().filter(|p| p.region == Region::None).count();
    if outside > 0 {
        log::warn!("{outside} platforms outside the study regions are not exported");
    }
    let mut written = Vec::new();
    for product in Product::ALL_PRODUCTS {
        let rows = product_rows(fleet, product);
        let csv_path = dir.join(format!("{}.csv", product.file_stem()));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(product.columns())?;
        for row in &rows {
            let mut fields = Vec::with_capacity(11);
            if let Some(q) = row.quarter {
                fields.push(q.to_string());
            }
            fields.extend(row.record.fields());
            w.write_record(&fields)?;
        }
        w.flush()?;
        written.push(csv_path);

        let gj_path = dir.join(format!("{}.geojson", product.file_stem()));
        let features: Vec<Feature> = rows.iter().map(|r| r.record.to_feature(r.quarter)).collect();
        geojson::write_features(&gj_path, &features)?;
        written.push(gj_path);
    }
    Ok(written)
}

/// Platform counts per region among records present in `q`.
pub fn counts_by_region<'a>(records: impl IntoIterator<Item = &'a OpdRecord>, q: Quarter) -> BTreeMap<Region, usize> {
    let mut m = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.present(q)) {
        *m.entry(r.region).or_insert(0) += 1;
    }
    m
}

pub fn turnover_of_records<'a>(records: impl IntoIterator<Item = &'a OpdRecord>) -> Turnover {
    crate::tracklink::turnover_of_spans(records.into_iter().map(|r| (r.first_quarter, r.last_quarter)))
}
