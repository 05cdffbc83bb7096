#![allow(dead_code)]

use chrono::NaiveDate;
use epiwave::phenomodel::EpidemicParams;
use epiwave::synth::{NoiseModel, SynthSegment, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// Days until the expected daily increment has peaked and fallen back to
/// `level`.
pub fn return_to_level(p: &EpidemicParams, level: f64) -> usize {
    let inc = |k: usize| p.growth_at(k as f64) - p.growth_at(k as f64 - 1.0);
    let mut peaked = false;
    for d in 1..5000 {
        peaked |= inc(d + 1) < inc(d);
        if peaked && inc(d) < level {
            return d;
        }
    }
    5000
}

/// Endemic background `a` interrupted by 2 to 4 waves. Each wave starts at
/// the endemic daily rate (`n0 = a / chi`) and ends once its increments
/// drop back to `a`.
pub fn multi_wave_spec(seed: u64, start: NaiveDate) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
    let waves = rng.random_range(2..=4);
    let a: f64 = rng.random_range(20.0..200.0);
    let mut segments = Vec::new();
    for _ in 0..waves {
        segments.push(SynthSegment::Endemic {
            a,
            duration_days: rng.random_range(60..=120),
            noise: NoiseModel::Poisson,
        });
        let chi = rng.random_range(0.08..0.25);
        let theta = rng.random_range(0.5..2.0);
        let n0 = a / chi;
        let n_inf = n0 * rng.random_range(20.0..200.0);
        let p = EpidemicParams {
            n_base: 0.0,
            n0,
            n_inf,
            chi,
            theta,
        };
        segments.push(SynthSegment::Epidemic {
            n0,
            n_inf,
            chi,
            theta,
            duration_days: return_to_level(&p, a).max(14),
            noise: NoiseModel::Poisson,
        });
    }
    segments.push(SynthSegment::Endemic {
        a,
        duration_days: 60,
        noise: NoiseModel::Poisson,
    });
    SynthSpec {
        start_date: start,
        label: format!("waves-{seed}"),
        seed,
        initial_cumulative: 1e5,
        segments,
    }
}
