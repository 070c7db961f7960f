//! CSV schemas at the file boundary. Dates exist only here; engines see
//! integer day indices counted from the first date of a file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates out of order at {0}")]
    Unordered(NaiveDate),
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("empty series")]
    Empty,
}

pub type IoResult<T> = std::result::Result<T, IoError>;

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn read(path: &Path) -> IoResult<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> IoResult<()> {
    let found = rdr
        .headers()
        .map_err(|e| IoError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if found.iter().collect::<Vec<_>>() != expected {
        return Err(IoError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn records(text: &str, header: &[&str]) -> IoResult<Vec<(u64, Vec<String>)>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

/// A daily series on contiguous dates; `None` marks a day with no report.
#[derive(Clone, Debug, PartialEq)]
pub struct DatedSeries<T> {
    pub start: NaiveDate,
    pub values: Vec<Option<T>>,
}

impl<T: Copy> DatedSeries<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + chrono::Days::new(index as u64)
    }

    /// Day index of `date`, which may lie past the end of the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        usize::try_from((date - self.start).num_days()).ok()
    }

    pub fn gaps(&self) -> Vec<NaiveDate> {
        (0..self.len()).filter(|&i| self.values[i].is_none()).map(|i| self.date(i)).collect()
    }
}

/// Daily new hospital admissions.
pub type ObservationSeries = DatedSeries<u64>;

fn parse_dated<T, F>(text: &str, header: &[&str], parse: F) -> IoResult<DatedSeries<T>>
where
    T: Copy,
    F: Fn(&str) -> Result<T, String>,
{
    let rows = records(text, header)?;
    let mut by_date: BTreeMap<NaiveDate, Option<T>> = BTreeMap::new();
    let mut last: Option<NaiveDate> = None;
    for (line, fields) in rows {
        let date = parse_date(&fields[0]).ok_or_else(|| IoError::Malformed {
            line,
            reason: format!("bad date `{}`", fields[0]),
        })?;
        let value = if fields[1].is_empty() {
            None
        } else {
            Some(parse(&fields[1]).map_err(|reason| IoError::Malformed { line, reason })?)
        };
        if by_date.contains_key(&date) {
            return Err(IoError::DuplicateDate(date));
        }
        if last.is_some_and(|l| date < l) {
            return Err(IoError::Unordered(date));
        }
        last = Some(date);
        by_date.insert(date, value);
    }
    let (&start, _) = by_date.iter().next().ok_or(IoError::Empty)?;
    let &end = by_date.keys().next_back().expect("nonempty");
    let days = (end - start).num_days() as usize + 1;
    let values = (0..days)
        .map(|i| by_date.get(&(start + chrono::Days::new(i as u64))).copied().flatten())
        .collect();
    Ok(DatedSeries { start, values })
}

pub fn parse_observations(text: &str) -> IoResult<ObservationSeries> {
    parse_dated(text, &["date", "count"], |s| {
        s.parse::<i64>()
            .map_err(|_| format!("bad count `{s}`"))
            .and_then(|v| u64::try_from(v).map_err(|_| format!("negative count {v}")))
    })
}

pub fn load_observations(path: &Path) -> IoResult<ObservationSeries> {
    parse_observations(&read(path)?)
}

/// Missing days are written with an empty count.
pub fn observations_to_csv(s: &ObservationSeries) -> String {
    let mut out = String::from("date,count\n");
    for (i, v) in s.values.iter().enumerate() {
        match v {
            Some(c) => writeln!(out, "{},{c}", s.date(i)),
            None => writeln!(out, "{},", s.date(i)),
        }
        .expect("write to string");
    }
    out
}

/// Daily outflow counts for the mobility covariate.
pub fn parse_mobility(text: &str) -> IoResult<DatedSeries<f64>> {
    parse_dated(text, &["date", "outflow_count"], |s| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| format!("bad outflow `{s}`"))
    })
}

pub fn load_mobility(path: &Path) -> IoResult<DatedSeries<f64>> {
    parse_mobility(&read(path)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowRow {
    pub date: NaiveDate,
    pub r1: usize,
    pub r2: usize,
    pub age: usize,
    pub count: f64,
}

fn field<T: std::str::FromStr>(line: u64, name: &str, s: &str) -> IoResult<T> {
    s.parse().map_err(|_| IoError::Malformed {
        line,
        reason: format!("bad {name} `{s}`"),
    })
}

pub fn parse_flows(text: &str) -> IoResult<Vec<FlowRow>> {
    records(text, &["date", "r1", "r2", "age", "count"])?
        .into_iter()
        .map(|(line, f)| {
            Ok(FlowRow {
                date: parse_date(&f[0]).ok_or_else(|| IoError::Malformed {
                    line,
                    reason: format!("bad date `{}`", f[0]),
                })?,
                r1: field(line, "r1", &f[1])?,
                r2: field(line, "r2", &f[2])?,
                age: field(line, "age", &f[3])?,
                count: field(line, "count", &f[4])?,
            })
        })
        .collect()
}

pub fn load_flows(path: &Path) -> IoResult<Vec<FlowRow>> {
    parse_flows(&read(path)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisitRow {
    pub date: NaiveDate,
    pub cohort: usize,
    pub location: usize,
    pub count: f64,
}

pub fn parse_visits(text: &str) -> IoResult<Vec<VisitRow>> {
    records(text, &["date", "cohort", "location", "count"])?
        .into_iter()
        .map(|(line, f)| {
            Ok(VisitRow {
                date: parse_date(&f[0]).ok_or_else(|| IoError::Malformed {
                    line,
                    reason: format!("bad date `{}`", f[0]),
                })?,
                cohort: field(line, "cohort", &f[1])?,
                location: field(line, "location", &f[2])?,
                count: field(line, "count", &f[3])?,
            })
        })
        .collect()
}

/// `header` then one row per entry of `rows`, numbers in shortest
/// round-trip form.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
