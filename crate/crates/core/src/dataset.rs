//! Historical GDP tables: parsing, normalization and windowing.
//!
//! Two layouts are understood. The *long* layout has one observation per
//! line under the header `region,year,gdp`. The *horizontal* layout follows
//! the Maddison spreadsheet export: a header row of year labels and one row
//! per region, with empty cells for years that have no estimate.
//!
//! Gaps are never filled in. A missing year is simply absent from the
//! resulting [`TimeSeries`].

use std::fmt;
use std::io::Write;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Header line of the long CSV layout.
pub const LONG_HEADER: &str = "region,year,gdp";

/// Calendar year (CE). Fractional values are allowed so that breakpoints
/// between observations can be expressed in the same unit.
pub type Year = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: bad number {text:?}")]
    BadNumber { line: u64, text: String },
    #[error("row {row}, column {column}: bad number {text:?}")]
    BadCell {
        row: u64,
        column: usize,
        text: String,
    },
    #[error("line {0}: GDP must be positive")]
    NonPositiveGdp(u64),
    #[error("row {row}, column {column}: GDP must be positive")]
    NonPositiveCell { row: u64, column: usize },
    #[error("line {line}: expected 3 fields, found {found}")]
    FieldCount { line: u64, found: usize },
    #[error("duplicate year {year} in region {region:?}")]
    DuplicateYear { region: String, year: Year },
    #[error("duplicate region {0:?}")]
    DuplicateRegion(String),
    #[error("invalid GDP {gdp} at year {year}")]
    InvalidGdp { year: Year, gdp: f64 },
    #[error("invalid year {0}")]
    InvalidYear(Year),
    #[error("observations for {0:?} are not strictly increasing in year")]
    Unordered(String),
    #[error("inverted window: from {from} > to {to}")]
    InvertedWindow { from: Year, to: Year },
    #[error("csv: {0}")]
    Csv(String),
}

/// One GDP estimate, in billions of 1990 international Geary-Khamis dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub year: Year,
    pub gdp: f64,
}

impl Observation {
    pub fn new(year: Year, gdp: f64) -> Self {
        Self { year, gdp }
    }
}

/// Observations for a single region, strictly increasing in year, all GDP
/// values positive and finite.
///
/// A windowed series may be empty; series produced by the parsers never are.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    region: String,
    observations: Vec<Observation>,
}

impl TimeSeries {
    /// Builds a series from observations already sorted by year.
    pub fn new(
        region: impl Into<String>,
        observations: Vec<Observation>,
    ) -> Result<Self, DatasetError> {
        let region = region.into();
        for obs in &observations {
            check_observation(obs)?;
        }
        for pair in observations.windows(2) {
            if pair[1].year == pair[0].year {
                return Err(DatasetError::DuplicateYear {
                    region,
                    year: pair[0].year,
                });
            }
            if pair[1].year < pair[0].year {
                return Err(DatasetError::Unordered(region));
            }
        }
        Ok(Self {
            region,
            observations,
        })
    }

    /// Sorts the observations by year, then validates.
    pub fn from_unsorted(
        region: impl Into<String>,
        mut observations: Vec<Observation>,
    ) -> Result<Self, DatasetError> {
        let region = region.into();
        if let Some(bad) = observations.iter().find(|o| !o.year.is_finite()) {
            return Err(DatasetError::InvalidYear(bad.year));
        }
        observations.sort_by(|a, b| a.year.total_cmp(&b.year));
        Self::new(region, observations)
    }

    /// Convenience constructor from `(year, gdp)` pairs.
    pub fn from_pairs(
        region: impl Into<String>,
        pairs: &[(Year, f64)],
    ) -> Result<Self, DatasetError> {
        Self::from_unsorted(
            region,
            pairs.iter().map(|&(y, g)| Observation::new(y, g)).collect(),
        )
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn years(&self) -> impl Iterator<Item = Year> + '_ {
        self.observations.iter().map(|o| o.year)
    }

    pub fn first_year(&self) -> Option<Year> {
        self.observations.first().map(|o| o.year)
    }

    pub fn last_year(&self) -> Option<Year> {
        self.observations.last().map(|o| o.year)
    }

    /// Observations with `from <= year <= to`. The result may be empty.
    pub fn window(&self, from: Year, to: Year) -> Result<TimeSeries, DatasetError> {
        if from > to {
            return Err(DatasetError::InvertedWindow { from, to });
        }
        Ok(TimeSeries {
            region: self.region.clone(),
            observations: self
                .observations
                .iter()
                .filter(|o| o.year >= from && o.year <= to)
                .copied()
                .collect(),
        })
    }

    /// Multiplies every GDP value by `factor` (e.g. `1e-3` for millions to
    /// billions).
    pub fn scaled(&self, factor: f64) -> TimeSeries {
        TimeSeries {
            region: self.region.clone(),
            observations: self
                .observations
                .iter()
                .map(|o| Observation::new(o.year, o.gdp * factor))
                .collect(),
        }
    }

    /// Shifts every year by `-offset`.
    pub fn shifted(&self, offset: Year) -> TimeSeries {
        TimeSeries {
            region: self.region.clone(),
            observations: self
                .observations
                .iter()
                .map(|o| Observation::new(o.year - offset, o.gdp))
                .collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(region: String, observations: Vec<Observation>) -> Self {
        Self {
            region,
            observations,
        }
    }
}

fn check_observation(obs: &Observation) -> Result<(), DatasetError> {
    if !obs.year.is_finite() {
        return Err(DatasetError::InvalidYear(obs.year));
    }
    if !(obs.gdp.is_finite() && obs.gdp > 0.0) {
        return Err(DatasetError::InvalidGdp {
            year: obs.year,
            gdp: obs.gdp,
        });
    }
    Ok(())
}

/// Series keyed by region label, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDataset {
    series: IndexMap<String, TimeSeries>,
    source: String,
}

impl RegionDataset {
    pub fn new(
        series: impl IntoIterator<Item = TimeSeries>,
        source: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let mut map = IndexMap::new();
        for s in series {
            let label = s.region().to_string();
            if map.insert(label.clone(), s).is_some() {
                return Err(DatasetError::DuplicateRegion(label));
            }
        }
        Ok(Self {
            series: map,
            source: source.into(),
        })
    }

    pub fn get(&self, region: &str) -> Option<&TimeSeries> {
        self.series.get(region)
    }

    pub fn regions(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimeSeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Provenance: content hash of the parsed text, optionally prefixed with
    /// a path by the caller.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Total observation count over all regions.
    pub fn observation_count(&self) -> usize {
        self.series.values().map(TimeSeries::len).sum()
    }

    /// All observations as `(region, observation)` in dataset order.
    pub fn flatten(&self) -> Vec<(String, Observation)> {
        self.series
            .values()
            .flat_map(|s| {
                s.observations()
                    .iter()
                    .map(move |o| (s.region().to_string(), *o))
            })
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> RegionDataset {
        RegionDataset {
            series: self
                .series
                .iter()
                .map(|(k, v)| (k.clone(), v.scaled(factor)))
                .collect(),
            source: self.source.clone(),
        }
    }

    /// Renames regions according to `(old, new)` pairs.
    pub fn renamed(&self, renames: &[(String, String)]) -> Result<RegionDataset, DatasetError> {
        let series =
            self.series.values().map(
                |s| match renames.iter().find(|(old, _)| old == s.region()) {
                    Some((_, new)) => {
                        TimeSeries::from_parts_unchecked(new.clone(), s.observations.clone())
                    }
                    None => s.clone(),
                },
            );
        RegionDataset::new(series.collect::<Vec<_>>(), self.source.clone())
    }

    /// Serializes to the long CSV layout with LF line endings.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer
            .write_record(["region", "year", "gdp"])
            .map_err(csv_err)?;
        for s in self.series.values() {
            for o in s.observations() {
                writer
                    .write_record([s.region(), &o.year.to_string(), &o.gdp.to_string()])
                    .map_err(csv_err)?;
            }
        }
        writer.flush().map_err(|e| DatasetError::Csv(e.to_string()))
    }

    pub fn to_long_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_long_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

impl fmt::Display for RegionDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.series.values() {
            writeln!(f, "{}: {} observations", s.region(), s.len())?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> DatasetError {
    DatasetError::Csv(e.to_string())
}

/// `sha256:<hex>` of the input text.
pub fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn strip_bom(text: &str) -> &str {
    text.strip_prefix('\u{feff}').unwrap_or(text)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

/// Parses a numeric cell. Commas are accepted as thousands separators, which
/// only occur inside quoted cells after CSV unquoting.
fn parse_number(cell: &str) -> Option<f64> {
    let cleaned: String = cell.trim().chars().filter(|&c| c != ',').collect();
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_blank(record: &csv::StringRecord) -> bool {
    record.iter().all(|c| c.trim().is_empty())
}

/// Parses the long layout (`region,year,gdp`).
pub fn parse_long_csv(text: &str) -> Result<RegionDataset, DatasetError> {
    let text = strip_bom(text);
    let mut rdr = reader(text);
    let mut records = rdr.records();

    let header = loop {
        match records.next() {
            Some(rec) => {
                let rec = rec.map_err(csv_err)?;
                if !is_blank(&rec) {
                    break rec;
                }
            }
            None => return Err(DatasetError::MalformedHeader("empty input".into())),
        }
    };
    let header_line: Vec<&str> = header.iter().collect();
    if header_line != ["region", "year", "gdp"] {
        return Err(DatasetError::MalformedHeader(format!(
            "expected `{LONG_HEADER}`, found `{}`",
            header_line.join(",")
        )));
    }

    let mut grouped: IndexMap<String, Vec<Observation>> = IndexMap::new();
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        if is_blank(&rec) {
            continue;
        }
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(DatasetError::FieldCount {
                line,
                found: rec.len(),
            });
        }
        let region = rec[0].trim().to_string();
        let year = parse_number(&rec[1]).ok_or_else(|| DatasetError::BadNumber {
            line,
            text: rec[1].to_string(),
        })?;
        let gdp = parse_number(&rec[2]).ok_or_else(|| DatasetError::BadNumber {
            line,
            text: rec[2].to_string(),
        })?;
        if gdp <= 0.0 {
            return Err(DatasetError::NonPositiveGdp(line));
        }
        grouped
            .entry(region)
            .or_default()
            .push(Observation::new(year, gdp));
    }

    let series = grouped
        .into_iter()
        .map(|(region, obs)| TimeSeries::from_unsorted(region, obs))
        .collect::<Result<Vec<_>, _>>()?;
    RegionDataset::new(series, content_hash(text))
}

/// Parses the horizontal layout: header row of year labels from the second
/// column on, then one row per region. Empty cells are gaps.
///
/// Fully blank rows are skipped. Error positions are 1-based physical line
/// (`row`) and 1-based column.
pub fn parse_maddison_horizontal(text: &str) -> Result<RegionDataset, DatasetError> {
    let text = strip_bom(text);
    let mut rdr = reader(text);
    let mut records = rdr.records();

    let header = loop {
        match records.next() {
            Some(rec) => {
                let rec = rec.map_err(csv_err)?;
                if !is_blank(&rec) {
                    break rec;
                }
            }
            None => return Err(DatasetError::MalformedHeader("empty input".into())),
        }
    };
    if header.len() < 2 {
        return Err(DatasetError::MalformedHeader(
            "need a label column and at least one year column".into(),
        ));
    }
    // None marks an unlabeled (trailing) column, which must stay empty.
    let mut years: Vec<Option<Year>> = Vec::with_capacity(header.len() - 1);
    for (idx, cell) in header.iter().enumerate().skip(1) {
        if cell.trim().is_empty() {
            years.push(None);
            continue;
        }
        let year = parse_number(cell).ok_or_else(|| {
            DatasetError::MalformedHeader(format!("column {}: year label {cell:?}", idx + 1))
        })?;
        if years.contains(&Some(year)) {
            return Err(DatasetError::MalformedHeader(format!(
                "column {}: repeated year {year}",
                idx + 1
            )));
        }
        years.push(Some(year));
    }
    if years.iter().all(Option::is_none) {
        return Err(DatasetError::MalformedHeader("no year labels".into()));
    }

    let mut series = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        if is_blank(&rec) {
            continue;
        }
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let region = rec[0].trim().to_string();
        let mut obs = Vec::new();
        for (idx, cell) in rec.iter().enumerate().skip(1) {
            let column = idx + 1;
            if cell.trim().is_empty() {
                continue;
            }
            let year = match years.get(idx - 1).copied().flatten() {
                Some(y) => y,
                None => {
                    return Err(DatasetError::MalformedHeader(format!(
                        "row {row}, column {column}: value under a column without a year label"
                    )))
                }
            };
            let gdp = parse_number(cell).ok_or_else(|| DatasetError::BadCell {
                row,
                column,
                text: cell.to_string(),
            })?;
            if gdp <= 0.0 {
                return Err(DatasetError::NonPositiveCell { row, column });
            }
            obs.push(Observation::new(year, gdp));
        }
        series.push(TimeSeries::from_unsorted(region, obs)?);
    }
    RegionDataset::new(series, content_hash(text))
}
