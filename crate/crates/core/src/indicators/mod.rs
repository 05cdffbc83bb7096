//! Trailing-window shape indicators of the daily case distribution:
//! coefficient of variation, skewness, kurtosis and entropy.

mod entropy;
mod moments;

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{add_days, CaseSeries};

pub use entropy::{approx_entropy, approx_entropy_scaled, shannon_entropy, Histogram};
pub use moments::{population_std, skewness_identity_check, window_moments, Moments};

pub const DEFAULT_WINDOW: usize = 14;

/// Which entropy fills the fourth indicator column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyMode {
    /// Approximate entropy with embedding `m` and tolerance
    /// `r = r_factor * std(window)`.
    Apen { m: usize, r_factor: f64 },
    /// Shannon entropy of an equal-width histogram with `bins` bins.
    Shannon { bins: usize },
}

impl Default for EntropyMode {
    fn default() -> Self {
        EntropyMode::Apen {
            m: 2,
            r_factor: 0.2,
        }
    }
}

impl EntropyMode {
    pub fn evaluate(&self, w: &[f64]) -> Result<f64> {
        match *self {
            EntropyMode::Apen { m, r_factor } => approx_entropy_scaled(w, m, r_factor),
            EntropyMode::Shannon { bins } => shannon_entropy(&Histogram::from_window(w, bins)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    pub window: usize,
    pub entropy: EntropyMode,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig {
            window: DEFAULT_WINDOW,
            entropy: EntropyMode::default(),
        }
    }
}

/// Shape statistics of one trailing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
    pub cv: f64,
    pub skew: f64,
    pub kurt: f64,
    pub entropy: f64,
    /// False when the window is degenerate (`std == 0` or `mean == 0`).
    pub valid: bool,
}

impl WindowStats {
    pub fn compute(w: &[f64], entropy: &EntropyMode) -> Result<WindowStats> {
        let m = window_moments(w)?;
        Ok(WindowStats {
            mean: m.mean,
            std: m.std,
            cv: m.cv,
            skew: m.skew,
            kurt: m.kurt,
            entropy: entropy.evaluate(w)?,
            valid: m.valid,
        })
    }

    /// The four PCA inputs in column order (cv, skew, kurt, entropy).
    pub fn indicators(&self) -> [f64; 4] {
        [self.cv, self.skew, self.kurt, self.entropy]
    }
}

/// Names of the four indicator columns in PCA order.
pub const INDICATOR_NAMES: [&str; 4] = ["cv", "skew", "kurt", "entropy"];

/// One [`WindowStats`] per day, starting at the end of the first full window.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    /// Date of the first row (last day of its window).
    pub start_date: NaiveDate,
    pub window: usize,
    pub rows: Vec<WindowStats>,
}

impl IndicatorSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        add_days(self.start_date, index)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.len() - 1)
    }

    pub fn valid_count(&self) -> usize {
        self.rows.iter().filter(|r| r.valid).count()
    }

    /// Writes `date,mean,std,cv,skew,kurt,entropy,valid`; undefined values are
    /// written as empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "date", "mean", "std", "cv", "skew", "kurt", "entropy", "valid",
        ])?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut record = vec![self.date(i).to_string()];
            record.extend(
                [r.mean, r.std, r.cv, r.skew, r.kurt, r.entropy]
                    .iter()
                    .map(|v| format_field(*v)),
            );
            record.push(r.valid.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the CSV written by [`IndicatorSeries::write_csv`]. The window
    /// length is not stored in the file and must be supplied.
    pub fn read_csv<R: Read>(reader: R, window: usize) -> Result<IndicatorSeries> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut start_date = None;
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let malformed = |reason: String| Error::MalformedRow { line, reason };
            if record.len() != 8 {
                return Err(malformed(format!(
                    "expected 8 fields, got {}",
                    record.len()
                )));
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| malformed(format!("bad date: {e}")))?;
            match start_date {
                None => start_date = Some(date),
                Some(s) if add_days(s, rows.len()) != date => {
                    return Err(malformed(format!("date {date} breaks the daily sequence")))
                }
                Some(_) => {}
            }
            let mut v = [0.0; 6];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = parse_field(&record[k + 1]).map_err(&malformed)?;
            }
            let valid = match &record[7] {
                "true" => true,
                "false" => false,
                other => return Err(malformed(format!("bad valid flag `{other}`"))),
            };
            rows.push(WindowStats {
                mean: v[0],
                std: v[1],
                cv: v[2],
                skew: v[3],
                kurt: v[4],
                entropy: v[5],
                valid,
            });
        }
        Ok(IndicatorSeries {
            start_date: start_date.ok_or(Error::EmptySeries)?,
            window,
            rows,
        })
    }

    pub fn load_csv(path: &Path, window: usize) -> Result<IndicatorSeries> {
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_csv(file, window)
    }
}

pub(crate) fn format_field(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn parse_field(s: &str) -> std::result::Result<f64, String> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

/// Computes the indicators of every full trailing window of `s`.
pub fn indicator_series(s: &CaseSeries, cfg: &IndicatorConfig) -> Result<IndicatorSeries> {
    let window = cfg.window;
    if window < 2 {
        return Err(Error::WrongWindowLength {
            got: window,
            expected: 2,
        });
    }
    if s.len() < window {
        return Err(Error::SeriesTooShort {
            len: s.len(),
            window,
        });
    }
    let rows = s
        .values
        .windows(window)
        .map(|w| WindowStats::compute(w, &cfg.entropy))
        .collect::<Result<Vec<_>>>()?;
    Ok(IndicatorSeries {
        start_date: add_days(s.start_date, window - 1),
        window,
        rows,
    })
}
