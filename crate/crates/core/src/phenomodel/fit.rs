//! Least-squares fitting of endemic and epidemic segments to cumulative
//! data, and assembly of a full phase model from breakpoints.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmConfig};
use super::{
    segment_points, Breakpoint, EndemicSegment, EpidemicParams, EpidemicSegment, Phase, PhaseModel,
    Segment,
};
use crate::error::{Error, Result};
use crate::series::{add_days, days_between, CumulativeSeries};

pub const MIN_ENDEMIC_POINTS: usize = 3;
pub const MIN_EPIDEMIC_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndemicFit {
    pub segment: EndemicSegment,
    pub ssr: f64,
    /// True when the least-squares slope was negative and clamped to zero.
    pub clamped: bool,
    /// Standard error of the unclamped slope (NaN with fewer than 3 points).
    pub slope_std_error: f64,
}

/// Ordinary least squares of `n0 + a s` on the points of `c` in `[t0, t1]`.
pub fn fit_endemic(c: &CumulativeSeries, t0: NaiveDate, t1: NaiveDate) -> Result<EndemicFit> {
    let (xs, ys) = segment_points(c, t0, t1);
    if xs.len() < MIN_ENDEMIC_POINTS {
        return Err(Error::TooFewPoints {
            got: xs.len(),
            min: MIN_ENDEMIC_POINTS,
        });
    }
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (sxx, sxy) = xs.iter().zip(&ys).fold((0.0, 0.0), |(sxx, sxy), (x, y)| {
        let dx = x - x_mean;
        (sxx + dx * dx, sxy + dx * (y - y_mean))
    });
    let slope = sxy / sxx;
    let ols_ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (y_mean + slope * (x - x_mean))).powi(2))
        .sum();
    let slope_std_error = (ols_ssr / (n - 2.0) / sxx).sqrt();

    let clamped = slope < 0.0;
    let (a, n0) = if clamped {
        log::warn!("endemic segment {t0}..{t1}: negative slope {slope:.3} clamped to 0");
        (0.0, y_mean)
    } else {
        (slope, y_mean - slope * x_mean)
    };
    let segment = EndemicSegment { t0, t1, n0, a };
    let ssr = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - segment.value_at(*x)).powi(2))
        .sum();
    Ok(EndemicFit {
        segment,
        ssr,
        clamped,
        slope_std_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicFit {
    pub segment: EpidemicSegment,
    pub ssr: f64,
    pub converged: bool,
    pub iterations: usize,
}

const THETA_RANGE: (f64, f64) = (0.01, 100.0);
const CHI_RANGE: (f64, f64) = (1e-5, 20.0);

fn to_vector(p: &EpidemicParams) -> [f64; 5] {
    [p.n_base, p.n0.ln(), p.n_inf.ln(), p.chi.ln(), p.theta.ln()]
}

fn from_vector(x: &[f64; 5]) -> EpidemicParams {
    EpidemicParams {
        n_base: x[0],
        n0: x[1].exp(),
        n_inf: x[2].exp(),
        chi: x[3].exp(),
        theta: x[4].exp(),
    }
}

/// Deterministic starting points: `theta` in {0.5, 1, 2} crossed with a
/// final size of 1x and 1.5x the observed rise; growth rate from the early
/// log-slope.
fn initial_guesses(xs: &[f64], ys: &[f64]) -> Vec<EpidemicParams> {
    let rise = ys[ys.len() - 1] - ys[0];
    let n0 = 0.01 * rise;
    let n_base = (ys[0] - n0).max(0.0);

    let k = (xs.len() / 4).max(4).min(xs.len());
    let early: Vec<(f64, f64)> = xs[..k]
        .iter()
        .zip(&ys[..k])
        .filter_map(|(x, y)| {
            let g = y - n_base;
            (g > 0.0).then(|| (*x, g.ln()))
        })
        .collect();
    let chi = log_slope(&early)
        .filter(|s| s.is_finite() && *s > 0.0)
        .unwrap_or(0.1)
        .clamp(1e-3, 2.0);

    let mut starts = Vec::with_capacity(6);
    for theta in [0.5, 1.0, 2.0] {
        for scale in [1.0, 1.5] {
            starts.push(EpidemicParams {
                n_base,
                n0,
                n_inf: rise * scale,
                chi,
                theta,
            });
        }
    }
    starts
}

fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - xm).powi(2), b + (x - xm) * (y - ym))
    });
    (sxx > 0.0).then(|| sxy / sxx)
}

fn project(upper_ln_n_inf: f64) -> impl Fn([f64; 5]) -> Option<[f64; 5]> {
    move |mut x: [f64; 5]| {
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        x[0] = x[0].max(0.0);
        x[2] = x[2].min(upper_ln_n_inf);
        x[3] = x[3].clamp(CHI_RANGE.0.ln(), CHI_RANGE.1.ln());
        x[4] = x[4].clamp(THETA_RANGE.0.ln(), THETA_RANGE.1.ln());
        // keep 0 < n0 < n_inf
        (x[2] > x[1] + 1e-12 && x[1] > -700.0).then_some(x)
    }
}

/// Residuals `model - data` and their Jacobian in the fit coordinates
/// `(n_base, ln n0, ln n_inf, ln chi, ln theta)`.
pub(crate) fn residuals(
    p: &EpidemicParams,
    xs: &[f64],
    ys: &[f64],
) -> Option<(Vec<f64>, Vec<[f64; 5]>)> {
    let mut r = Vec::with_capacity(xs.len());
    let mut jac = Vec::with_capacity(xs.len());
    for (x, y) in xs.iter().zip(ys) {
        let (v, g) = p.value_and_gradient(*x);
        if !v.is_finite() || g.iter().any(|d| !d.is_finite()) {
            return None;
        }
        r.push(v - y);
        jac.push(g);
    }
    Some((r, jac))
}

/// Bernoulli-Verhulst fit to the cumulative points in `[t0, t1]`.
///
/// Runs Levenberg-Marquardt from each deterministic start (and `init`, if
/// given) and keeps the lowest SSR. A fit that hits the iteration cap is
/// returned with `converged == false`.
pub fn fit_epidemic(
    c: &CumulativeSeries,
    t0: NaiveDate,
    t1: NaiveDate,
    init: Option<EpidemicParams>,
    lm: &LmConfig,
) -> Result<EpidemicFit> {
    let (xs, ys) = segment_points(c, t0, t1);
    if xs.len() < MIN_EPIDEMIC_POINTS {
        return Err(Error::TooFewPoints {
            got: xs.len(),
            min: MIN_EPIDEMIC_POINTS,
        });
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidData("non-finite cumulative value".into()));
    }
    let rise = ys[ys.len() - 1] - ys[0];
    if !(rise > 0.0) {
        return Err(Error::InvalidData(format!(
            "cumulative data do not increase over {t0}..{t1}"
        )));
    }
    let y_max = ys.iter().copied().fold(f64::MIN, f64::max).abs().max(1.0);
    let proj = project((1e6 * y_max).ln());

    let mut starts = Vec::new();
    if let Some(p) = init {
        p.validate()?;
        starts.push(p);
    }
    starts.extend(initial_guesses(&xs, &ys));

    let best = starts
        .iter()
        .filter_map(|start| {
            minimize(
                to_vector(start),
                lm,
                |x: &[f64; 5]| residuals(&from_vector(x), &xs, &ys),
                &proj,
            )
        })
        .min_by(|a, b| a.ssr.total_cmp(&b.ssr))
        .ok_or_else(|| Error::InvalidData("no starting point could be evaluated".into()))?;

    let segment = EpidemicSegment {
        t0,
        t1,
        params: from_vector(&best.x),
    };
    segment.validate()?;
    if !best.converged {
        log::warn!(
            "epidemic fit {t0}..{t1} stopped after {} iterations",
            best.iterations
        );
    }
    Ok(EpidemicFit {
        segment,
        ssr: best.ssr,
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// Sum of squared residuals of a segment against the data in its range.
pub fn segment_ssr(seg: &Segment, c: &CumulativeSeries) -> f64 {
    let (xs, ys) = segment_points(c, seg.t0(), seg.t1());
    xs.iter()
        .zip(&ys)
        .map(|(x, y)| (seg.value_at(*x) - y).powi(2))
        .sum()
}

#[derive(Default, Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub lm: LmConfig,
    /// Move each interior breakpoint by up to this many days to lower the
    /// total SSR before the final fit.
    pub refine_radius: Option<usize>,
}

/// Fit report of one segment: `{type, t0, t1, params..., ssr, converged}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    #[serde(flatten)]
    pub segment: Segment,
    pub ssr: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFit {
    pub model: PhaseModel,
    pub reports: Vec<SegmentReport>,
}

impl PhaseFit {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }
}

fn fit_one(
    c: &CumulativeSeries,
    phase: Phase,
    t0: NaiveDate,
    t1: NaiveDate,
    lm: &LmConfig,
) -> Result<SegmentReport> {
    Ok(match phase {
        Phase::Endemic => {
            let f = fit_endemic(c, t0, t1)?;
            SegmentReport {
                segment: Segment::Endemic(f.segment),
                ssr: f.ssr,
                converged: true,
            }
        }
        Phase::Epidemic => {
            let f = fit_epidemic(c, t0, t1, None, lm)?;
            SegmentReport {
                segment: Segment::Epidemic(f.segment),
                ssr: f.ssr,
                converged: f.converged,
            }
        }
    })
}

fn min_points(phase: Phase) -> usize {
    match phase {
        Phase::Endemic => MIN_ENDEMIC_POINTS,
        Phase::Epidemic => MIN_EPIDEMIC_POINTS,
    }
}

fn check_breakpoints(c: &CumulativeSeries, bps: &[Breakpoint]) -> Result<()> {
    if c.is_empty() {
        return Err(Error::EmptySeries);
    }
    let first = bps
        .first()
        .ok_or_else(|| Error::InvalidBreakpoints("no breakpoints".into()))?;
    if let Some(w) = bps.windows(2).find(|w| w[1].date <= w[0].date) {
        return Err(Error::InvalidBreakpoints(format!(
            "{} does not follow {}",
            w[1].date, w[0].date
        )));
    }
    let last = bps[bps.len() - 1];
    if first.date < c.start_date || last.date >= c.end_date() {
        return Err(Error::InvalidBreakpoints(format!(
            "breakpoints must lie in [{}, {})",
            c.start_date,
            c.end_date()
        )));
    }
    Ok(())
}

fn segment_end(c: &CumulativeSeries, bps: &[Breakpoint], i: usize) -> NaiveDate {
    bps.get(i + 1).map_or(c.end_date(), |b| b.date)
}

/// Fits every segment delimited by `bps`; segment `i` spans from its
/// breakpoint to the next one (the last runs to the end of `c`).
pub fn assemble_phase_model(
    c: &CumulativeSeries,
    bps: &[Breakpoint],
    label: &str,
    opts: &FitOptions,
) -> Result<PhaseFit> {
    check_breakpoints(c, bps)?;
    let refined;
    let bps = match opts.refine_radius {
        Some(radius) if radius > 0 => {
            refined = refine_breakpoints(c, bps, radius, &opts.lm)?;
            &refined[..]
        }
        _ => bps,
    };
    let reports = bps
        .iter()
        .enumerate()
        .map(|(i, bp)| {
            fit_one(c, bp.phase, bp.date, segment_end(c, bps, i), &opts.lm).map_err(|e| {
                Error::Segment {
                    index: i,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseFit {
        model: PhaseModel {
            label: label.to_string(),
            segments: reports.iter().map(|r| r.segment).collect(),
        },
        reports,
    })
}

/// Local search: each interior breakpoint, left to right, moves to the
/// offset in `-radius..=radius` minimizing the SSR of its two neighbouring
/// segments. Ties keep the smaller move.
pub fn refine_breakpoints(
    c: &CumulativeSeries,
    bps: &[Breakpoint],
    radius: usize,
    lm: &LmConfig,
) -> Result<Vec<Breakpoint>> {
    check_breakpoints(c, bps)?;
    let mut out = bps.to_vec();
    for i in 1..out.len() {
        let prev = out[i - 1];
        let end = segment_end(c, &out, i);
        let cost = |date: NaiveDate| -> f64 {
            let left = fit_one(c, prev.phase, prev.date, date, lm);
            let right = fit_one(c, out[i].phase, date, end, lm);
            match (left, right) {
                (Ok(l), Ok(r)) => l.ssr + r.ssr,
                _ => f64::INFINITY,
            }
        };
        let mut best = (cost(out[i].date), out[i].date);
        for k in 1..=radius as i64 {
            for offset in [-k, k] {
                let date = add_days_signed(out[i].date, offset);
                let left_len = days_between(prev.date, date) + 1;
                let right_len = days_between(date, end) + 1;
                if left_len < min_points(prev.phase) as i64
                    || right_len < min_points(out[i].phase) as i64
                {
                    continue;
                }
                let cost = cost(date);
                if cost < best.0 {
                    best = (cost, date);
                }
            }
        }
        out[i].date = best.1;
    }
    Ok(out)
}

fn add_days_signed(date: NaiveDate, offset: i64) -> NaiveDate {
    if offset >= 0 {
        add_days(date, offset as usize)
    } else {
        date - chrono::Days::new(offset.unsigned_abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn cumulative(values: Vec<f64>) -> CumulativeSeries {
        CumulativeSeries {
            start_date: d("2020-03-01"),
            values,
        }
    }

    #[test]
    fn endemic_exact_line() {
        let c = cumulative((0..20).map(|i| 50.0 + 3.0 * f64::from(i)).collect());
        let f = fit_endemic(&c, c.start_date, c.end_date()).unwrap();
        assert!((f.segment.n0 - 50.0).abs() < 1e-9);
        assert!((f.segment.a - 3.0).abs() < 1e-9);
        assert!(f.ssr < 1e-18);
        assert!(!f.clamped);
    }

    #[test]
    fn endemic_negative_slope_is_clamped() {
        let c = cumulative((0..10).map(|i| 100.0 - f64::from(i)).collect());
        let f = fit_endemic(&c, c.start_date, c.end_date()).unwrap();
        assert!(f.clamped);
        assert_eq!(f.segment.a, 0.0);
        assert!((f.segment.n0 - 95.5).abs() < 1e-12);
    }

    #[test]
    fn endemic_too_few_points() {
        let c = cumulative(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            fit_endemic(&c, d("2020-03-03"), d("2020-03-04")),
            Err(Error::TooFewPoints { got: 2, min: 3 })
        ));
    }

    #[test]
    fn epidemic_rejects_decreasing_and_short_input() {
        let lm = LmConfig::default();
        let down = cumulative((0..30).map(|i| 1000.0 - f64::from(i)).collect());
        assert!(matches!(
            fit_epidemic(&down, down.start_date, down.end_date(), None, &lm),
            Err(Error::InvalidData(_))
        ));
        let short = cumulative((0..5).map(f64::from).collect());
        assert!(matches!(
            fit_epidemic(&short, short.start_date, short.end_date(), None, &lm),
            Err(Error::TooFewPoints { got: 5, min: 8 })
        ));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = EpidemicParams {
            n_base: 250.0,
            n0: 40.0,
            n_inf: 2e4,
            chi: 0.15,
            theta: 0.7,
        };
        let x = to_vector(&p);
        let h = 1e-6;
        for s in [0.0, 3.0, 17.5, 40.0, 90.0] {
            let (_, g) = p.value_and_gradient(s);
            for k in 0..5 {
                let step = if k == 0 { h * 250.0 } else { h };
                let mut xp = x;
                let mut xm = x;
                xp[k] += step;
                xm[k] -= step;
                let fd =
                    (from_vector(&xp).value_at(s) - from_vector(&xm).value_at(s)) / (2.0 * step);
                let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
                assert!(
                    (fd - g[k]).abs() < 1e-6 * scale,
                    "s {s} k {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn breakpoint_validation() {
        let c = cumulative((0..60).map(|i| f64::from(i) * 2.0).collect());
        let bp = |date: &str, phase| Breakpoint {
            date: d(date),
            phase,
        };
        let opts = FitOptions::default();
        let misordered = [
            bp("2020-03-20", Phase::Endemic),
            bp("2020-03-10", Phase::Endemic),
        ];
        assert!(matches!(
            assemble_phase_model(&c, &misordered, "x", &opts),
            Err(Error::InvalidBreakpoints(_))
        ));
        assert!(assemble_phase_model(&c, &[], "x", &opts).is_err());
        let outside = [bp("2020-02-01", Phase::Endemic)];
        assert!(assemble_phase_model(&c, &outside, "x", &opts).is_err());

        let whole =
            assemble_phase_model(&c, &[bp("2020-03-01", Phase::Endemic)], "x", &opts).unwrap();
        let direct = fit_endemic(&c, c.start_date, c.end_date()).unwrap();
        assert_eq!(whole.model.segments, vec![Segment::Endemic(direct.segment)]);

        let err = assemble_phase_model(
            &c,
            &[
                bp("2020-03-01", Phase::Endemic),
                bp("2020-04-28", Phase::Epidemic),
            ],
            "x",
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Segment { index: 1, .. }));
    }

    #[test]
    fn report_json_shape() {
        let report = SegmentReport {
            segment: Segment::Endemic(EndemicSegment {
                t0: d("2020-03-01"),
                t1: d("2020-04-01"),
                n0: 5.0,
                a: 2.0,
            }),
            ssr: 1.5,
            converged: true,
        };
        let json = serde_json::to_value(report).unwrap();
        assert_eq!(json["type"], "endemic");
        assert_eq!(json["t0"], "2020-03-01");
        assert_eq!(json["a"], 2.0);
        assert_eq!(json["converged"], true);
        let back: SegmentReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
