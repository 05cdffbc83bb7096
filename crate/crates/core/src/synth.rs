//! Synthetic endemic/epidemic case series with known generating model.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `SynthSpec::seed` and
//! Poisson draws from `rand_distr` 0.5.1 (both pinned exactly in the
//! manifest), so a given spec produces the same series on every platform.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phenomodel::{EndemicSegment, EpidemicParams, EpidemicSegment, PhaseModel, Segment};
use crate::series::{add_days, CaseSeries};

pub const MIN_SEGMENT_DAYS: usize = 14;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// Daily counts equal the expected increments.
    None,
    /// Daily counts are Poisson draws around the expected increments.
    #[default]
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SynthSegment {
    Endemic {
        a: f64,
        duration_days: usize,
        #[serde(default)]
        noise: NoiseModel,
    },
    Epidemic {
        n0: f64,
        n_inf: f64,
        chi: f64,
        theta: f64,
        duration_days: usize,
        #[serde(default)]
        noise: NoiseModel,
    },
}

impl SynthSegment {
    pub fn duration_days(&self) -> usize {
        match *self {
            SynthSegment::Endemic { duration_days, .. }
            | SynthSegment::Epidemic { duration_days, .. } => duration_days,
        }
    }

    fn noise(&self) -> NoiseModel {
        match *self {
            SynthSegment::Endemic { noise, .. } | SynthSegment::Epidemic { noise, .. } => noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub start_date: NaiveDate,
    #[serde(default = "default_label")]
    pub label: String,
    pub seed: u64,
    /// Cumulative cases before the first day.
    #[serde(default)]
    pub initial_cumulative: f64,
    pub segments: Vec<SynthSegment>,
}

fn default_label() -> String {
    "synthetic".into()
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<SynthSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn total_days(&self) -> usize {
        self.segments.iter().map(SynthSegment::duration_days).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidSpec("no segments".into()));
        }
        if !(self.initial_cumulative >= 0.0) || !self.initial_cumulative.is_finite() {
            return Err(Error::InvalidSpec("initial_cumulative must be >= 0".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.duration_days() < MIN_SEGMENT_DAYS {
                return Err(Error::InvalidSpec(format!(
                    "segment {i}: duration {} < {MIN_SEGMENT_DAYS} days",
                    seg.duration_days()
                )));
            }
            match *seg {
                SynthSegment::Endemic { a, .. } => {
                    if !(a >= 0.0) || !a.is_finite() {
                        return Err(Error::InvalidSpec(format!("segment {i}: a = {a}")));
                    }
                }
                SynthSegment::Epidemic {
                    n0,
                    n_inf,
                    chi,
                    theta,
                    ..
                } => {
                    let p = EpidemicParams {
                        n_base: 0.0,
                        n0,
                        n_inf,
                        chi,
                        theta,
                    };
                    p.validate()
                        .map_err(|e| Error::InvalidSpec(format!("segment {i}: {e}")))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub series: CaseSeries,
    pub truth: PhaseModel,
}

/// Expected daily increments and the generating segment for one spec entry,
/// anchored at the realized cumulative count before its first day.
fn plan_segment(
    seg: &SynthSegment,
    t0: NaiveDate,
    t1: NaiveDate,
    prior: f64,
) -> Result<(Vec<f64>, Segment)> {
    let days = seg.duration_days();
    match *seg {
        SynthSegment::Endemic { a, .. } => Ok((
            vec![a; days],
            Segment::Endemic(EndemicSegment {
                t0,
                t1,
                n0: prior + a,
                a,
            }),
        )),
        SynthSegment::Epidemic {
            n0,
            n_inf,
            chi,
            theta,
            ..
        } => {
            let mut params = EpidemicParams {
                n_base: 0.0,
                n0,
                n_inf,
                chi,
                theta,
            };
            // day t0 + k receives N(k) - N(k - 1)
            params.n_base = prior - params.growth_at(-1.0);
            if params.n_base < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "epidemic starting {t0} needs at least {} prior cumulative cases",
                    params.growth_at(-1.0)
                )));
            }
            let increments = (0..days)
                .map(|k| params.growth_at(k as f64) - params.growth_at(k as f64 - 1.0))
                .collect();
            Ok((
                increments,
                Segment::Epidemic(EpidemicSegment { t0, t1, params }),
            ))
        }
    }
}

/// Generates the daily series and the exact generating phase model.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.total_days();
    let mut values = Vec::with_capacity(total);
    let mut segments = Vec::with_capacity(spec.segments.len());
    let mut cumulative = spec.initial_cumulative;

    for (i, seg) in spec.segments.iter().enumerate() {
        let t0 = add_days(spec.start_date, values.len());
        let t1 = if i + 1 == spec.segments.len() {
            add_days(t0, seg.duration_days() - 1)
        } else {
            add_days(t0, seg.duration_days())
        };
        let (expected, truth) = plan_segment(seg, t0, t1, cumulative)?;
        for lambda in expected {
            let count = match seg.noise() {
                NoiseModel::None => lambda,
                NoiseModel::Poisson => poisson(&mut rng, lambda)?,
            };
            cumulative += count;
            values.push(count);
        }
        segments.push(truth);
    }
    Ok(Synthetic {
        series: CaseSeries::new(spec.start_date, values, spec.label.clone())?,
        truth: PhaseModel {
            label: spec.label.clone(),
            segments,
        },
    })
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    let dist = Poisson::new(lambda)
        .map_err(|e| Error::InvalidSpec(format!("Poisson rate {lambda}: {e}")))?;
    Ok(dist.sample(rng))
}
