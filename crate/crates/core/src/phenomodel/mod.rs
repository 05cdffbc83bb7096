//! Piecewise phenomenological model of cumulative cases: linear endemic
//! segments and Bernoulli-Verhulst epidemic segments.

mod fit;
mod lm;

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{add_days, days_between, CumulativeSeries};

pub use fit::{
    assemble_phase_model, fit_endemic, fit_epidemic, refine_breakpoints, segment_ssr, EndemicFit,
    EpidemicFit, FitOptions, PhaseFit, SegmentReport,
};
pub use lm::{LmConfig, LmOutcome};

/// Linear endemic segment `CR(t) = n0 + a (t - t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndemicSegment {
    pub t0: NaiveDate,
    pub t1: NaiveDate,
    pub n0: f64,
    /// Mean daily new cases.
    pub a: f64,
}

impl EndemicSegment {
    pub fn validate(&self) -> Result<()> {
        if self.t1 <= self.t0 {
            return Err(Error::InvalidParameters(format!(
                "segment end {} not after start {}",
                self.t1, self.t0
            )));
        }
        if !(self.a >= 0.0) || !self.a.is_finite() || !self.n0.is_finite() || self.n0 < 0.0 {
            return Err(Error::InvalidParameters(format!(
                "endemic n0 = {}, a = {}",
                self.n0, self.a
            )));
        }
        Ok(())
    }

    /// Cumulative value `s` days after `t0` (no range check).
    pub fn value_at(&self, s: f64) -> f64 {
        self.n0 + self.a * s
    }

    pub fn eval(&self, t: NaiveDate) -> Result<f64> {
        if t < self.t0 || t > self.t1 {
            return Err(Error::OutOfSegment {
                date: t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(self.value_at(days_between(self.t0, t) as f64))
    }
}

/// Bernoulli-Verhulst parameters of one epidemic segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Cumulative offset; `n_base + n0` is the value at `t0`.
    pub n_base: f64,
    pub n0: f64,
    /// Final size above `n_base`.
    pub n_inf: f64,
    /// Malthusian growth rate (1/day).
    pub chi: f64,
    /// Shape exponent; 1 gives the classical logistic.
    pub theta: f64,
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.n_base, self.n0, self.n_inf, self.chi, self.theta]
            .iter()
            .all(|v| v.is_finite())
            && self.n_base >= 0.0
            && self.n0 > 0.0
            && self.n_inf > self.n0
            && self.chi > 0.0
            && self.theta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!("{self:?}")))
        }
    }

    /// `N(s) = CR(s) - n_base`, evaluated as
    /// `n0 [1 - (1 - q)(1 - exp(-chi theta s))]^{-1/theta}` with
    /// `q = (n0 / n_inf)^theta`, which stays finite for large `s`.
    pub fn growth_at(&self, s: f64) -> f64 {
        let q = (self.n0 / self.n_inf).powf(self.theta);
        let x = self.chi * self.theta * s;
        let ln_d = ln_denominator(q, (-x).exp(), -(-x).exp_m1());
        self.n0 * (-ln_d / self.theta).exp()
    }

    /// Cumulative value `s` days after `t0`.
    pub fn value_at(&self, s: f64) -> f64 {
        self.n_base + self.growth_at(s)
    }

    /// Right-hand side `chi N (1 - (N / n_inf)^theta)` at growth level `n`.
    pub fn rhs(&self, n: f64) -> f64 {
        if n <= 0.0 {
            return self.chi * n;
        }
        self.chi * n * (1.0 - (n / self.n_inf).powf(self.theta))
    }

    /// Growth level at which daily new cases peak.
    pub fn inflection_level(&self) -> f64 {
        self.n_inf * (1.0 + self.theta).powf(-1.0 / self.theta)
    }

    /// `CR(s)` and its partial derivatives with respect to
    /// `(n_base, ln n0, ln n_inf, ln chi, ln theta)`.
    pub fn value_and_gradient(&self, s: f64) -> (f64, [f64; 5]) {
        let EpidemicParams {
            n_base,
            n0,
            n_inf,
            chi,
            theta,
        } = *self;
        let q = (n0 / n_inf).powf(theta);
        let e = (-chi * theta * s).exp();
        let one_minus_e = -(-chi * theta * s).exp_m1();
        let d = e + q * one_minus_e;
        let ln_d = ln_denominator(q, e, one_minus_e);
        let n = n0 * (-ln_d / theta).exp();

        let d_ln_n0 = 1.0 - one_minus_e * q / d;
        let d_ln_ninf = one_minus_e * q / d;
        let d_ln_chi = (1.0 - q) * chi * s * e / d;
        let d_ln_theta =
            ln_d / theta + (chi * s * e * (1.0 - q) - one_minus_e * q * (n0 / n_inf).ln()) / d;
        (
            n_base + n,
            [
                1.0,
                n * d_ln_n0,
                n * d_ln_ninf,
                n * d_ln_chi,
                n * d_ln_theta,
            ],
        )
    }
}

/// `ln(e + q (1 - e))`: through `ln_1p` near `d = 1`, directly once the
/// log1p argument approaches -1 and would amplify its rounding error.
fn ln_denominator(q: f64, e: f64, one_minus_e: f64) -> f64 {
    let shrink = (1.0 - q) * one_minus_e;
    if shrink.abs() < 0.5 {
        (-shrink).ln_1p()
    } else {
        (e + q * one_minus_e).ln()
    }
}

/// Bernoulli-Verhulst epidemic segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicSegment {
    pub t0: NaiveDate,
    pub t1: NaiveDate,
    #[serde(flatten)]
    pub params: EpidemicParams,
}

impl EpidemicSegment {
    pub fn validate(&self) -> Result<()> {
        if self.t1 <= self.t0 {
            return Err(Error::InvalidParameters(format!(
                "segment end {} not after start {}",
                self.t1, self.t0
            )));
        }
        self.params.validate()
    }

    /// Closed-form cumulative value at `t >= t0`.
    pub fn eval(&self, t: NaiveDate) -> Result<f64> {
        self.validate()?;
        if t < self.t0 {
            return Err(Error::OutOfSegment {
                date: t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(self.params.value_at(days_between(self.t0, t) as f64))
    }
}

/// Bernoulli-Verhulst right-hand side for growth level `n = CR - n_base`.
pub fn bv_rhs(seg: &EpidemicSegment, n: f64) -> Result<f64> {
    seg.params.validate()?;
    Ok(seg.params.rhs(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Segment {
    Endemic(EndemicSegment),
    Epidemic(EpidemicSegment),
}

impl Segment {
    pub fn t0(&self) -> NaiveDate {
        match self {
            Segment::Endemic(s) => s.t0,
            Segment::Epidemic(s) => s.t0,
        }
    }

    pub fn t1(&self) -> NaiveDate {
        match self {
            Segment::Endemic(s) => s.t1,
            Segment::Epidemic(s) => s.t1,
        }
    }

    pub fn phase(&self) -> Phase {
        match self {
            Segment::Endemic(_) => Phase::Endemic,
            Segment::Epidemic(_) => Phase::Epidemic,
        }
    }

    /// Cumulative value `s` days after `t0`, extrapolating past the ends.
    pub fn value_at(&self, s: f64) -> f64 {
        match self {
            Segment::Endemic(e) => e.value_at(s),
            Segment::Epidemic(e) => e.params.value_at(s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Segment::Endemic(e) => e.validate(),
            Segment::Epidemic(e) => e.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Endemic,
    Epidemic,
}

/// Start of a phase; a segment runs to the next breakpoint (or series end).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub date: NaiveDate,
    pub phase: Phase,
}

pub fn breakpoints_from_json(text: &str) -> Result<Vec<Breakpoint>> {
    Ok(serde_json::from_str(text)?)
}

pub fn breakpoints_to_json(bps: &[Breakpoint]) -> Result<String> {
    Ok(serde_json::to_string_pretty(bps)?)
}

/// Time-ordered, contiguous sequence of fitted segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    pub label: String,
    pub segments: Vec<Segment>,
}

/// One row of the exported model curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub date: NaiveDate,
    pub cumulative: f64,
    pub daily: f64,
}

impl PhaseModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<PhaseModel> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn start_date(&self) -> Option<NaiveDate> {
        self.segments.first().map(Segment::t0)
    }

    pub fn end_date(&self) -> Option<NaiveDate> {
        self.segments.last().map(Segment::t1)
    }

    pub fn breakpoints(&self) -> Vec<Breakpoint> {
        self.segments
            .iter()
            .map(|s| Breakpoint {
                date: s.t0(),
                phase: s.phase(),
            })
            .collect()
    }

    /// Segment owning `date`: a segment owns `[t0, next t0)`, the last one
    /// owns `[t0, t1]`.
    pub fn segment_at(&self, date: NaiveDate) -> Option<&Segment> {
        let last = self.segments.last()?;
        if date < self.segments[0].t0() || date > last.t1() {
            return None;
        }
        self.segments.iter().rev().find(|s| s.t0() <= date)
    }

    pub fn value_at(&self, date: NaiveDate) -> Option<f64> {
        let seg = self.segment_at(date)?;
        Some(seg.value_at(days_between(seg.t0(), date) as f64))
    }

    /// Largest jump of the cumulative curve where consecutive segments meet.
    pub fn max_join_gap(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|w| {
                let end = w[0].value_at(days_between(w[0].t0(), w[1].t0()) as f64);
                (w[1].value_at(0.0) - end).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Model cumulative curve and its one-day difference for every date the
    /// model covers. The difference on a segment's first day uses that
    /// segment's formula one day earlier.
    pub fn curves(&self) -> Vec<CurvePoint> {
        let (Some(start), Some(end)) = (self.start_date(), self.end_date()) else {
            return Vec::new();
        };
        let days = days_between(start, end) as usize + 1;
        (0..days)
            .map(|i| {
                let date = add_days(start, i);
                let seg = self.segment_at(date).expect("date inside model range");
                let s = days_between(seg.t0(), date) as f64;
                let cumulative = seg.value_at(s);
                CurvePoint {
                    date,
                    cumulative,
                    daily: cumulative - seg.value_at(s - 1.0),
                }
            })
            .collect()
    }

    /// `date,model_cumulative,model_daily`.
    pub fn write_curves_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "model_cumulative", "model_daily"])?;
        for p in self.curves() {
            w.write_record([
                p.date.to_string(),
                p.cumulative.to_string(),
                p.daily.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dates of the points of `c` inside `[t0, t1]` as offsets from `t0`.
pub(crate) fn segment_points(
    c: &CumulativeSeries,
    t0: NaiveDate,
    t1: NaiveDate,
) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &y) in c.values.iter().enumerate() {
        let date = c.date(i);
        if date >= t0 && date <= t1 {
            xs.push(days_between(t0, date) as f64);
            ys.push(y);
        }
    }
    (xs, ys)
}
