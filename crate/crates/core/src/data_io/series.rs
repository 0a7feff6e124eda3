//! Dated CSV series and the aligned market history built from them.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};

use super::format_sig;

/// Strictly increasing `(date, value)` observations with positive values.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DatedSeries {
    pub points: Vec<(NaiveDate, f64)>,
}

impl DatedSeries {
    pub fn new(points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for (i, (date, value)) in points.iter().enumerate() {
            if !(value.is_finite() && *value > 0.0) {
                return Err(Error::data(format!("non-positive value {value} on {date}")));
            }
            if i > 0 && points[i - 1].0 >= *date {
                return Err(Error::data(format!(
                    "dates not strictly increasing at {date}"
                )));
            }
        }
        Ok(DatedSeries { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.points
            .binary_search_by_key(&date, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// Observations with `start <= date <= end`; either bound may be open.
    pub fn between(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> &[(NaiveDate, f64)] {
        let lo = start.map_or(0, |s| self.points.partition_point(|p| p.0 < s));
        let hi = end.map_or(self.points.len(), |e| {
            self.points.partition_point(|p| p.0 <= e)
        });
        &self.points[lo..hi.max(lo)]
    }

    /// Most recent observation on or before `date`.
    pub fn last_on_or_before(&self, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let i = self.points.partition_point(|p| p.0 <= date);
        i.checked_sub(1).map(|i| self.points[i])
    }
}

/// Which column layout a CSV file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Price,
    HashRate,
}

impl SeriesKind {
    pub fn header(self) -> [&'static str; 2] {
        match self {
            SeriesKind::Price => ["date", "price_usd"],
            SeriesKind::HashRate => ["date", "hashrate_hs"],
        }
    }

    fn value_name(self) -> &'static str {
        match self {
            SeriesKind::Price => "price",
            SeriesKind::HashRate => "hash-rate",
        }
    }
}

fn parse_err(source: &str, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses a two-column series. `source` names the input in errors.
///
/// A header row is required. Rows after it must have an ISO-8601 date and a
/// positive value, dates strictly increasing. Every row is either parsed or
/// reported; none are skipped.
pub fn parse_series<R: Read>(reader: R, kind: SeriesKind, source: &str) -> Result<DatedSeries> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut points: Vec<(NaiveDate, f64)> = Vec::new();
    let mut saw_header = false;
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(source, line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if !saw_header {
            let expected = kind.header();
            if record.len() != 2
                || record.get(0) != Some(expected[0])
                || record.get(1) != Some(expected[1])
            {
                return Err(parse_err(
                    source,
                    line,
                    1,
                    format!("expected header `{},{}`", expected[0], expected[1]),
                ));
            }
            saw_header = true;
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(
                source,
                line,
                record.len().min(3),
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(source, line, 1, format!("bad date `{}`: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(source, line, 2, format!("bad number `{}`", &record[1])))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(parse_err(
                source,
                line,
                2,
                format!("non-positive {} {value}", kind.value_name()),
            ));
        }
        if let Some((prev, _)) = points.last() {
            if *prev == date {
                return Err(parse_err(source, line, 1, format!("duplicate date {date}")));
            }
            if *prev > date {
                return Err(parse_err(
                    source,
                    line,
                    1,
                    format!("date {date} is not after {prev}"),
                ));
            }
        }
        points.push((date, value));
    }
    if !saw_header {
        return Err(parse_err(source, 1, 1, "empty file"));
    }
    Ok(DatedSeries { points })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads `date,price_usd` rows.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<DatedSeries> {
    let path = path.as_ref();
    parse_series(open(path)?, SeriesKind::Price, &path.display().to_string())
}

/// Loads `date,hashrate_hs` rows.
pub fn load_hashrate_csv(path: impl AsRef<Path>) -> Result<DatedSeries> {
    let path = path.as_ref();
    parse_series(
        open(path)?,
        SeriesKind::HashRate,
        &path.display().to_string(),
    )
}

/// Renders a series in the same layout the loaders accept.
pub fn series_to_csv(series: &DatedSeries, kind: SeriesKind) -> String {
    let [a, b] = kind.header();
    let mut out = format!("{a},{b}\n");
    for (date, value) in &series.points {
        out.push_str(&format!("{date},{}\n", format_sig(*value)));
    }
    out
}

pub fn write_series_csv(
    series: &DatedSeries,
    kind: SeriesKind,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::create(path).map_err(io)?;
    file.write_all(series_to_csv(series, kind).as_bytes())
        .map_err(io)
}

/// One date on which both a price and a network hash-rate are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketRow {
    pub date: NaiveDate,
    pub price: f64,
    pub hash_rate: f64,
}

/// Exchange-rate and network hash-rate history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketHistory {
    pub prices: DatedSeries,
    pub hash_rates: DatedSeries,
}

impl MarketHistory {
    pub fn new(prices: DatedSeries, hash_rates: DatedSeries) -> Self {
        MarketHistory { prices, hash_rates }
    }

    /// Consecutive daily rows starting at `start`.
    pub fn from_daily(start: NaiveDate, prices: &[f64], hash_rates: &[f64]) -> Result<Self> {
        let dated = |values: &[f64]| {
            DatedSeries::new(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (start + chrono::Days::new(i as u64), *v))
                    .collect(),
            )
        };
        Ok(MarketHistory {
            prices: dated(prices)?,
            hash_rates: dated(hash_rates)?,
        })
    }

    /// Dates present in both series, in order.
    pub fn aligned(&self) -> Vec<MarketRow> {
        let mut rows = Vec::new();
        let (mut i, mut j) = (0, 0);
        let (p, h) = (&self.prices.points, &self.hash_rates.points);
        while i < p.len() && j < h.len() {
            match p[i].0.cmp(&h[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    rows.push(MarketRow {
                        date: p[i].0,
                        price: p[i].1,
                        hash_rate: h[j].1,
                    });
                    i += 1;
                    j += 1;
                }
            }
        }
        rows
    }

    /// Aligned rows from `start` on; row `i` is turn `i` of a backtest.
    pub fn rows_from(&self, start: NaiveDate) -> Vec<MarketRow> {
        self.aligned()
            .into_iter()
            .filter(|r| r.date >= start)
            .collect()
    }
}
