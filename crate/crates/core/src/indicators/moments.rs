//! Population moments of a single window.

use crate::error::{Error, Result};

/// Moment-based shape statistics of one window (population, divisor `n`).
///
/// `skew` and `kurt` are NaN when `std == 0`; `cv` is NaN when `mean == 0`.
/// `valid` is false whenever any of them is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub cv: f64,
    pub skew: f64,
    /// Raw (non-excess) kurtosis; 3 for a Gaussian.
    pub kurt: f64,
    pub valid: bool,
}

fn check_finite(w: &[f64]) -> Result<()> {
    match w.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteInput(i)),
        None => Ok(()),
    }
}

/// Mean and deviations from it. The deviations are re-centred by their own
/// mean, which recovers the rounding error of the first-pass mean; this keeps
/// them accurate relative to the spread even when `std/mean` is tiny.
fn centred(w: &[f64]) -> (f64, Vec<f64>) {
    let n = w.len() as f64;
    let mean0 = w.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = w.iter().map(|x| x - mean0).collect();
    let correction = dev.iter().sum::<f64>() / n;
    dev.iter_mut().for_each(|d| *d -= correction);
    (mean0 + correction, dev)
}

/// Mean, standard deviation, coefficient of variation, skewness and kurtosis
/// of `w` with divisor `w.len()`.
pub fn window_moments(w: &[f64]) -> Result<Moments> {
    if w.len() < 2 {
        return Err(Error::WrongWindowLength {
            got: w.len(),
            expected: 2,
        });
    }
    check_finite(w)?;
    let n = w.len() as f64;
    let (mean, dev) = centred(w);
    let var = dev.iter().map(|d| d * d).sum::<f64>() / n;
    let std = var.sqrt();

    let cv = if mean != 0.0 { std / mean } else { f64::NAN };
    let (skew, kurt) = if std > 0.0 {
        let (s3, s4) = dev.iter().fold((0.0, 0.0), |(s3, s4), d| {
            let z = d / std;
            let z2 = z * z;
            (s3 + z2 * z, s4 + z2 * z2)
        });
        (s3 / n, s4 / n)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Moments {
        mean,
        std,
        cv,
        skew,
        kurt,
        valid: std > 0.0 && mean > 0.0,
    })
}

/// Population standard deviation (divisor `n`).
pub fn population_std(w: &[f64]) -> f64 {
    if w.is_empty() {
        return f64::NAN;
    }
    let (_, dev) = centred(w);
    (dev.iter().map(|d| d * d).sum::<f64>() / w.len() as f64).sqrt()
}

/// Self-test of the raw-moment skewness identity
/// `Skew = (E[N^3] - 3 mu sigma^2 - mu^3) / sigma^3`.
///
/// Returns the absolute difference between the standardized-deviation
/// skewness of [`window_moments`] and the raw-moment route. The raw-moment
/// side cancels catastrophically when `std/mean` is small, so it is
/// accumulated in double-double arithmetic.
pub fn skewness_identity_check(w: &[f64]) -> Result<f64> {
    let m = window_moments(w)?;
    if m.std == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let n = w.len() as f64;
    let raw3 = w
        .iter()
        .fold(Dd::ZERO, |acc, &x| acc + Dd::from(x) * x * x)
        .div_f64(n);
    let mu = w.iter().fold(Dd::ZERO, |acc, &x| acc + x).div_f64(n);
    let var = w
        .iter()
        .fold(Dd::ZERO, |acc, &x| {
            let d = Dd::from(x) - mu;
            acc + d * d
        })
        .div_f64(n);
    let numerator = raw3 - mu * var * 3.0 - mu * mu * mu;
    let sigma = var.hi.sqrt();
    let rhs = numerator.hi / (sigma * sigma * sigma);
    Ok((m.skew - rhs).abs())
}

/// Unevaluated sum `hi + lo` carrying about 32 significant digits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let (s, t) = two_sum(self.hi, -p);
        let q2 = (s + (t - e + self.lo)) / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl std::ops::Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        self + Dd::from(b)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl std::ops::Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        self * Dd::from(b)
    }
}
