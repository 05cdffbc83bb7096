//! Daily case series: CSV ingestion, gap filling, trailing smoothing and
//! cumulation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dated, gap-free daily new-case counts. Index `i` is `start_date + i` days.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSeries {
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
    pub label: String,
}

/// Cumulative case counts, non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeSeries {
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

/// How interior dates absent from the input file are filled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Absent days count as zero reported cases.
    #[default]
    ZeroFill,
    /// Absent days repeat the previous reported value.
    ForwardFill,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub date_column: String,
    pub value_column: String,
    pub fill: FillPolicy,
    /// Keep only rows whose `column` equals `value` (e.g. one country out of
    /// a global feed).
    pub filter: Option<(String, String)>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            date_column: "date".into(),
            value_column: "value".into(),
            fill: FillPolicy::ZeroFill,
            filter: None,
        }
    }
}

/// Result of [`parse_csv`] with the data-quality counters.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: CaseSeries,
    /// Number of negative raw values clamped to zero.
    pub clamped: usize,
    /// Number of dates filled by the fill policy (absent rows or empty cells).
    pub filled: usize,
}

pub(crate) fn add_days(date: NaiveDate, days: usize) -> NaiveDate {
    date.checked_add_days(Days::new(days as u64))
        .expect("date arithmetic out of range")
}

pub(crate) fn days_between(from: NaiveDate, to: NaiveDate) -> i64 {
    (to - from).num_days()
}

impl CaseSeries {
    pub fn new(start_date: NaiveDate, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidData(format!(
                "value at index {i} is negative or not finite"
            )));
        }
        Ok(CaseSeries {
            start_date,
            values,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        add_days(self.start_date, index)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.len() - 1)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len()).map(|i| self.date(i))
    }

    /// Writes the canonical `date,value` CSV form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "value"])?;
        for (date, v) in self.dates().zip(&self.values) {
            w.write_record([date.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

impl CumulativeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        add_days(self.start_date, index)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.len() - 1)
    }

    /// Index of `date`, if it falls inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let d = days_between(self.start_date, date);
        (d >= 0 && (d as usize) < self.len()).then_some(d as usize)
    }
}

/// Reads a daily case CSV file into a gap-free series.
pub fn parse_csv(path: &Path, opts: &CsvOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let label = match &opts.filter {
        Some((_, value)) => value.clone(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut ingested = parse_csv_reader(file, opts)?;
    ingested.series.label = label;
    Ok(ingested)
}

/// Same as [`parse_csv`] over any reader; the label is left empty.
pub fn parse_csv_reader<R: Read>(reader: R, opts: &CsvOptions) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_idx = column(&opts.date_column)?;
    let value_idx = column(&opts.value_column)?;
    let filter = match &opts.filter {
        Some((col, value)) => Some((column(col)?, value.as_str())),
        None => None,
    };

    // None marks an explicitly empty value cell.
    let mut rows: BTreeMap<NaiveDate, Option<f64>> = BTreeMap::new();
    let mut clamped = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        if let Some((idx, wanted)) = filter {
            if record.get(idx) != Some(wanted) {
                continue;
            }
        }
        let raw_date = record
            .get(date_idx)
            .ok_or_else(|| malformed("missing date field".into()))?;
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| malformed(format!("bad date `{raw_date}`: {e}")))?;
        let raw_value = record
            .get(value_idx)
            .ok_or_else(|| malformed("missing value field".into()))?;
        let value = if raw_value.is_empty() {
            None
        } else {
            let v: f64 = raw_value
                .parse()
                .map_err(|_| malformed(format!("bad value `{raw_value}`")))?;
            if !v.is_finite() {
                return Err(malformed(format!("non-finite value `{raw_value}`")));
            }
            if v < 0.0 {
                clamped += 1;
                Some(0.0)
            } else {
                Some(v)
            }
        };
        if rows.insert(date, value).is_some() {
            return Err(malformed(format!("duplicate date {date}")));
        }
    }

    let (&start_date, _) = rows.first_key_value().ok_or(Error::EmptySeries)?;
    let (&end_date, _) = rows.last_key_value().ok_or(Error::EmptySeries)?;
    let len = days_between(start_date, end_date) as usize + 1;
    let mut values = Vec::with_capacity(len);
    let mut filled = 0;
    let mut previous = 0.0;
    for i in 0..len {
        let v = match rows.get(&add_days(start_date, i)).copied().flatten() {
            Some(v) => v,
            None => {
                filled += 1;
                match opts.fill {
                    FillPolicy::ZeroFill => 0.0,
                    FillPolicy::ForwardFill => previous,
                }
            }
        };
        previous = v;
        values.push(v);
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} negative value(s) to zero");
    }
    Ok(Ingested {
        series: CaseSeries {
            start_date,
            values,
            label: String::new(),
        },
        clamped,
        filled,
    })
}

/// Trailing moving average: output index `t` is the mean of
/// `s[t - window + 1 ..= t]`, dated at the last day of its window.
pub fn rolling_average(s: &CaseSeries, window: usize) -> Result<CaseSeries> {
    if window == 0 {
        return Err(Error::WrongWindowLength {
            got: 0,
            expected: 1,
        });
    }
    if s.len() < window {
        return Err(Error::SeriesTooShort {
            len: s.len(),
            window,
        });
    }
    let n = window as f64;
    let values = s
        .values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / n)
        .collect();
    Ok(CaseSeries {
        start_date: add_days(s.start_date, window - 1),
        values,
        label: s.label.clone(),
    })
}

/// Running sum of the daily counts.
pub fn cumulate(s: &CaseSeries) -> CumulativeSeries {
    let values = s
        .values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    CumulativeSeries {
        start_date: s.start_date,
        values,
    }
}
