//! Standardization of the four indicators, correlation-matrix PCA and the
//! first-principal-component score.

mod jacobi;

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{format_field, IndicatorSeries, INDICATOR_NAMES};
use crate::series::{add_days, days_between};

pub use jacobi::{eigen_sym, SymmetricEigen};

pub const MIN_FIT_ROWS: usize = 5;

/// Global z-score parameters, one per indicator column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: [f64; 4],
    pub stds: [f64; 4],
}

impl Standardizer {
    /// Fits means and population standard deviations over `rows`.
    pub fn fit(rows: &[[f64; 4]]) -> Result<Standardizer> {
        if rows.len() < 2 {
            return Err(Error::NotEnoughRows {
                got: rows.len(),
                min: 2,
            });
        }
        let n = rows.len() as f64;
        let mut means = [0.0; 4];
        let mut stds = [0.0; 4];
        for k in 0..4 {
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) || !std.is_finite() || std <= 1e-14 * mean.abs() {
                return Err(Error::DegenerateColumn(INDICATOR_NAMES[k]));
            }
            means[k] = mean;
            stds[k] = std;
        }
        Ok(Standardizer { means, stds })
    }

    pub fn apply(&self, row: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| (row[k] - self.means[k]) / self.stds[k])
    }
}

/// Standardized indicator rows; `None` marks rows excluded as invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub rows: Vec<Option<[f64; 4]>>,
    pub standardizer: Standardizer,
}

/// Z-scores every valid row using statistics over all valid rows.
pub fn standardize(ind: &IndicatorSeries) -> Result<Standardized> {
    let fit_rows: Vec<[f64; 4]> = ind
        .rows
        .iter()
        .filter(|r| r.valid)
        .map(|r| r.indicators())
        .collect();
    let standardizer = Standardizer::fit(&fit_rows)?;
    let rows = ind
        .rows
        .iter()
        .map(|r| r.valid.then(|| standardizer.apply(&r.indicators())))
        .collect();
    Ok(Standardized { rows, standardizer })
}

/// Fitted four-indicator PCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    #[serde(flatten)]
    pub standardizer: Standardizer,
    /// Row `i` is indicator `i` (cv, skew, kurt, entropy); column `k` is the
    /// `k`-th principal direction.
    pub loadings: [[f64; 4]; 4],
    /// Percentage of variance per component, non-increasing, summing to 100.
    pub explained: [f64; 4],
    /// Eigenvalues of the correlation matrix.
    #[serde(default)]
    pub eigenvalues: [f64; 4],
}

impl PcaModel {
    pub fn pc1(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.loadings[i][0])
    }

    /// First-component score of one raw indicator row.
    pub fn score_row(&self, raw: &[f64; 4]) -> f64 {
        let z = self.standardizer.apply(raw);
        let pc1 = self.pc1();
        (0..4).map(|k| pc1[k] * z[k]).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<PcaModel> {
        Ok(serde_json::from_str(text)?)
    }
}

/// PCA over all valid rows.
pub fn pca_fit(ind: &IndicatorSeries) -> Result<PcaModel> {
    pca_fit_masked(ind, None)
}

/// PCA over the valid rows for which `mask` (if given) is true.
pub fn pca_fit_masked(ind: &IndicatorSeries, mask: Option<&[bool]>) -> Result<PcaModel> {
    if let Some(mask) = mask {
        if mask.len() != ind.len() {
            return Err(Error::InvalidData(format!(
                "row mask has {} entries for {} rows",
                mask.len(),
                ind.len()
            )));
        }
    }
    let rows: Vec<[f64; 4]> = ind
        .rows
        .iter()
        .enumerate()
        .filter(|(i, r)| r.valid && mask.is_none_or(|m| m[*i]))
        .map(|(_, r)| r.indicators())
        .collect();
    fit_rows(&rows)
}

/// PCA on raw indicator rows (all treated as valid).
pub fn fit_rows(rows: &[[f64; 4]]) -> Result<PcaModel> {
    if rows.len() < MIN_FIT_ROWS {
        return Err(Error::NotEnoughRows {
            got: rows.len(),
            min: MIN_FIT_ROWS,
        });
    }
    let standardizer = Standardizer::fit(rows)?;
    let n = rows.len() as f64;
    let mut corr = [[0.0; 4]; 4];
    for row in rows {
        let z = standardizer.apply(row);
        for i in 0..4 {
            for j in i..4 {
                corr[i][j] += z[i] * z[j];
            }
        }
    }
    for i in 0..4 {
        for j in i..4 {
            corr[i][j] /= n;
            corr[j][i] = corr[i][j];
        }
    }
    let eig = eigen_sym(&corr)?;
    let eigenvalues = eig.values.map(|l| l.max(0.0));
    let total: f64 = eigenvalues.iter().sum();
    let explained = eigenvalues.map(|l| 100.0 * l / total);

    let mut loadings = eig.vectors;
    for k in 0..4 {
        let pivot = if k == 0 && loadings[0][0] != 0.0 {
            0
        } else {
            // largest-magnitude entry, first on ties
            (0..4).fold(0, |best, i| {
                if loadings[i][k].abs() > loadings[best][k].abs() {
                    i
                } else {
                    best
                }
            })
        };
        if loadings[pivot][k] < 0.0 {
            for row in loadings.iter_mut() {
                row[k] = -row[k];
            }
        }
    }
    Ok(PcaModel {
        standardizer,
        loadings,
        explained,
        eigenvalues,
    })
}

/// First-principal-component score per day; `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub start_date: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        add_days(self.start_date, index)
    }

    /// `date,c1` with an empty field for gaps.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "c1"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([
                self.date(i).to_string(),
                format_field(v.unwrap_or(f64::NAN)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<ScoreSeries> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut start_date = None;
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let malformed = |reason: String| Error::MalformedRow { line, reason };
            if record.len() < 2 {
                return Err(malformed("expected `date,c1`".into()));
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| malformed(format!("bad date: {e}")))?;
            let start = *start_date.get_or_insert(date);
            if add_days(start, values.len()) != date {
                return Err(malformed(format!("date {date} breaks the daily sequence")));
            }
            let v = match &record[1] {
                "" => None,
                s => Some(
                    s.parse::<f64>()
                        .map_err(|_| malformed(format!("bad score `{s}`")))?,
                ),
            };
            values.push(v);
        }
        Ok(ScoreSeries {
            start_date: start_date.ok_or(Error::EmptyScore)?,
            values,
        })
    }

    pub fn load_csv(path: &Path) -> Result<ScoreSeries> {
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_csv(file)
    }
}

/// Scores every row of `ind`; invalid rows become gaps.
pub fn score_pc1(model: &PcaModel, ind: &IndicatorSeries) -> ScoreSeries {
    ScoreSeries {
        start_date: ind.start_date,
        values: ind
            .rows
            .iter()
            .map(|r| r.valid.then(|| model.score_row(&r.indicators())))
            .collect(),
    }
}

/// Scores the rows dated `from..=to`.
pub fn score_pc1_range(
    model: &PcaModel,
    ind: &IndicatorSeries,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<ScoreSeries> {
    let first = days_between(ind.start_date, from);
    let last = days_between(ind.start_date, to);
    if ind.is_empty() || from > to || first < 0 || last >= ind.len() as i64 {
        return Err(Error::DateRangeMismatch { from, to });
    }
    let full = score_pc1(model, ind);
    Ok(ScoreSeries {
        start_date: from,
        values: full.values[first as usize..=last as usize].to_vec(),
    })
}
