//! Shannon entropy of a window histogram and approximate entropy (ApEn).

use crate::error::{Error, Result};

use super::moments::population_std;

/// Equal-width histogram: `bin_edges.len() == probabilities.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Histogram {
    /// Relative frequencies of `w` over `bins` equal-width intervals spanning
    /// `[min, max]`; the last interval is closed. A window with `min == max`
    /// yields a single bin holding all mass.
    pub fn from_window(w: &[f64], bins: usize) -> Result<Histogram> {
        if w.is_empty() {
            return Err(Error::EmptySeries);
        }
        if bins == 0 {
            return Err(Error::InvalidHistogram("zero bins".into()));
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Ok(Histogram {
                bin_edges: vec![lo, hi],
                probabilities: vec![1.0],
            });
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &x in w {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let n = w.len() as f64;
        let bin_edges = (0..=bins)
            .map(|k| if k == bins { hi } else { lo + width * k as f64 })
            .collect();
        Ok(Histogram {
            bin_edges,
            probabilities: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.is_empty() {
            return Err(Error::InvalidHistogram("no bins".into()));
        }
        if self.bin_edges.len() != self.probabilities.len() + 1 {
            return Err(Error::InvalidHistogram(format!(
                "{} edges for {} bins",
                self.bin_edges.len(),
                self.probabilities.len()
            )));
        }
        if self.bin_edges.windows(2).any(|e| !(e[0] <= e[1])) {
            return Err(Error::InvalidHistogram("bin edges not ordered".into()));
        }
        if let Some(p) = self
            .probabilities
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidHistogram(format!(
                "probability {p} out of [0, 1]"
            )));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidHistogram(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(())
    }
}

/// `-sum p ln p` over the non-empty bins, in nats.
pub fn shannon_entropy(h: &Histogram) -> Result<f64> {
    h.validate()?;
    let e: f64 = h
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    // -p ln p summed for a single p = 1 gives -0.0
    Ok(e.max(0.0))
}

/// Pincus approximate entropy `Phi^m(r) - Phi^{m+1}(r)` with self-matches
/// counted and Chebyshev distance between templates.
pub fn approx_entropy(w: &[f64], m: usize, r: f64) -> Result<f64> {
    if m == 0 || w.len() < m + 1 {
        return Err(Error::WindowTooShort {
            len: w.len(),
            min: m.max(1) + 1,
        });
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameters(format!("tolerance r = {r}")));
    }
    Ok(phi(w, m, r) - phi(w, m + 1, r))
}

/// ApEn with `r = r_factor * std(w)`; a constant window gives 0.
pub fn approx_entropy_scaled(w: &[f64], m: usize, r_factor: f64) -> Result<f64> {
    let std = population_std(w);
    if std == 0.0 {
        if w.len() < m + 1 {
            return Err(Error::WindowTooShort {
                len: w.len(),
                min: m + 1,
            });
        }
        return Ok(0.0);
    }
    approx_entropy(w, m, r_factor * std)
}

fn phi(w: &[f64], m: usize, r: f64) -> f64 {
    let count = w.len() - m + 1;
    let total: f64 = (0..count)
        .map(|i| {
            let matches = (0..count)
                .filter(|&j| (0..m).all(|k| (w[i + k] - w[j + k]).abs() <= r))
                .count();
            (matches as f64 / count as f64).ln()
        })
        .sum();
    total / count as f64
}
