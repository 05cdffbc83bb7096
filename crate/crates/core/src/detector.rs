//! Threshold rule on the first-component score and retro-prediction scoring
//! against reference epidemic onsets.
//!
//! An event is a complete excursion of the score above the threshold: an
//! up-crossing from a (non-gap) value at or below the threshold, followed by
//! the first return to or below it. The down-crossing arms a prediction that
//! a wave starts `lead_days` later. Gaps in the score cancel an excursion in
//! progress.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::format_field;
use crate::pca::ScoreSeries;
use crate::phenomodel::{PhaseModel, Segment};
use crate::series::{add_days, days_between};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRule {
    pub threshold: f64,
    pub lead_days: u32,
    pub match_tolerance_days: u32,
}

impl Default for DetectionRule {
    fn default() -> Self {
        DetectionRule {
            threshold: 1.0,
            lead_days: 7,
            match_tolerance_days: 14,
        }
    }
}

impl DetectionRule {
    pub fn validate(&self) -> Result<()> {
        if self.threshold.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!(
                "threshold {}",
                self.threshold
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub up_crossing_date: NaiveDate,
    pub down_crossing_date: NaiveDate,
    pub predicted_onset_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventScan {
    pub events: Vec<Event>,
    /// Up-crossing date of an excursion still above the threshold at the end
    /// of the score.
    pub armed: Option<NaiveDate>,
}

/// Scans the score for complete excursions above `rule.threshold`.
pub fn threshold_events(score: &ScoreSeries, rule: &DetectionRule) -> Result<EventScan> {
    if score.is_empty() {
        return Err(Error::EmptyScore);
    }
    rule.validate()?;
    enum State {
        // no usable value yet, or just after a gap
        Unknown,
        Below,
        Above(usize),
    }
    let mut state = State::Unknown;
    let mut events = Vec::new();
    for (i, v) in score.values.iter().enumerate() {
        state = match (state, v) {
            (_, None) => State::Unknown,
            (State::Unknown, Some(v)) => {
                if *v > rule.threshold {
                    State::Unknown
                } else {
                    State::Below
                }
            }
            (State::Below, Some(v)) => {
                if *v > rule.threshold {
                    State::Above(i)
                } else {
                    State::Below
                }
            }
            (State::Above(up), Some(v)) => {
                if *v > rule.threshold {
                    State::Above(up)
                } else {
                    let down = score.date(i);
                    events.push(Event {
                        up_crossing_date: score.date(up),
                        down_crossing_date: down,
                        predicted_onset_date: add_days(down, rule.lead_days as usize),
                    });
                    State::Below
                }
            }
        };
    }
    let armed = match state {
        State::Above(up) => Some(score.date(up)),
        _ => None,
    };
    Ok(EventScan { events, armed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub reference_onset: NaiveDate,
    pub predicted_onset: NaiveDate,
    /// `predicted - reference` in days.
    pub offset_days: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub rule: DetectionRule,
    pub events: Vec<Event>,
    pub armed: Option<NaiveDate>,
    pub reference_onsets: Vec<NaiveDate>,
    pub matched: Vec<Match>,
    /// Events matching no reference onset; not part of the ratio.
    pub false_alarms: usize,
    /// Matched references over all references (0 when there are none).
    pub performance_ratio: f64,
}

/// Greedy chronological matching: each predicted onset, earliest first,
/// takes the nearest unmatched reference within the tolerance (the earlier
/// one on ties).
pub fn score_performance(
    scan: &EventScan,
    reference_onsets: &[NaiveDate],
    rule: &DetectionRule,
) -> DetectionReport {
    let mut refs = reference_onsets.to_vec();
    refs.sort();
    let mut events = scan.events.clone();
    events.sort_by_key(|e| e.predicted_onset_date);

    let tol = i64::from(rule.match_tolerance_days);
    let mut taken = vec![false; refs.len()];
    let mut matched = Vec::new();
    for e in &events {
        let best = refs
            .iter()
            .enumerate()
            .filter(|(k, _)| !taken[*k])
            .map(|(k, r)| (k, days_between(*r, e.predicted_onset_date)))
            .filter(|(_, off)| off.abs() <= tol)
            .min_by_key(|(k, off)| (off.abs(), *k));
        if let Some((k, offset_days)) = best {
            taken[k] = true;
            matched.push(Match {
                reference_onset: refs[k],
                predicted_onset: e.predicted_onset_date,
                offset_days,
            });
        }
    }
    let performance_ratio = if refs.is_empty() {
        0.0
    } else {
        matched.len() as f64 / refs.len() as f64
    };
    DetectionReport {
        rule: *rule,
        false_alarms: events.len() - matched.len(),
        events,
        armed: scan.armed,
        reference_onsets: refs,
        matched,
        performance_ratio,
    }
}

/// Start dates of the epidemic segments of a phase model.
pub fn reference_onsets_from_phase_model(pm: &PhaseModel) -> Vec<NaiveDate> {
    pm.segments
        .iter()
        .filter_map(|s| match s {
            Segment::Epidemic(e) => Some(e.t0),
            Segment::Endemic(_) => None,
        })
        .collect()
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `date,c1,event_flag` where the flag lists `up`, `down` and `onset`
    /// markers falling on that date, joined by `+`.
    pub fn write_overlay_csv<W: Write>(&self, score: &ScoreSeries, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "c1", "event_flag"])?;
        for (i, v) in score.values.iter().enumerate() {
            let date = score.date(i);
            let mut flags = Vec::new();
            if self.events.iter().any(|e| e.up_crossing_date == date) || self.armed == Some(date) {
                flags.push("up");
            }
            if self.events.iter().any(|e| e.down_crossing_date == date) {
                flags.push("down");
            }
            if self.events.iter().any(|e| e.predicted_onset_date == date) {
                flags.push("onset");
            }
            w.write_record([
                date.to_string(),
                format_field(v.unwrap_or(f64::NAN)),
                flags.join("+"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phenomodel::{EndemicSegment, EpidemicParams, EpidemicSegment};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn score(values: &[Option<f64>]) -> ScoreSeries {
        ScoreSeries {
            start_date: d("2021-01-01"),
            values: values.to_vec(),
        }
    }

    fn some(values: &[f64]) -> ScoreSeries {
        score(&values.iter().map(|v| Some(*v)).collect::<Vec<_>>())
    }

    #[test]
    fn constant_score_has_no_events() {
        let scan = threshold_events(&some(&[0.0; 30]), &DetectionRule::default()).unwrap();
        assert!(scan.events.is_empty());
        assert!(scan.armed.is_none());
    }

    #[test]
    fn single_excursion() {
        let s = some(&[0.0, 0.5, 1.2, 1.5, 0.8, 0.2, 0.1]);
        let scan = threshold_events(&s, &DetectionRule::default()).unwrap();
        assert_eq!(
            scan.events,
            vec![Event {
                up_crossing_date: s.date(2),
                down_crossing_date: s.date(4),
                predicted_onset_date: s.date(11),
            }]
        );
    }

    #[test]
    fn open_excursion_is_armed() {
        let scan =
            threshold_events(&some(&[0.0, 0.5, 1.2, 1.5, 1.8]), &DetectionRule::default()).unwrap();
        assert!(scan.events.is_empty());
        assert_eq!(scan.armed, Some(d("2021-01-03")));
    }

    #[test]
    fn gaps_and_initial_excursion() {
        // starts above: not an up-crossing; gap cancels the second excursion
        let s = score(&[
            Some(2.0),
            Some(0.5),
            Some(1.5),
            None,
            Some(0.5),
            Some(0.2),
            Some(3.0),
            Some(0.0),
        ]);
        let scan = threshold_events(&s, &DetectionRule::default()).unwrap();
        assert_eq!(scan.events.len(), 1);
        assert_eq!(scan.events[0].up_crossing_date, s.date(6));
        // value equal to the threshold counts as below
        let eq = threshold_events(&some(&[0.0, 1.0, 1.0, 0.0]), &DetectionRule::default()).unwrap();
        assert!(eq.events.is_empty());
    }

    #[test]
    fn empty_score_is_an_error() {
        assert!(matches!(
            threshold_events(&score(&[]), &DetectionRule::default()),
            Err(Error::EmptyScore)
        ));
    }

    fn scan_with_onsets(onsets: &[&str]) -> EventScan {
        EventScan {
            events: onsets
                .iter()
                .map(|o| Event {
                    up_crossing_date: d("2020-01-01"),
                    down_crossing_date: d("2020-01-02"),
                    predicted_onset_date: d(o),
                })
                .collect(),
            armed: None,
        }
    }

    #[test]
    fn performance_examples() {
        let rule = DetectionRule::default();
        let refs = [d("2020-03-10"), d("2020-07-01"), d("2020-11-20")];
        let r = score_performance(
            &scan_with_onsets(&["2020-03-12", "2020-06-28", "2020-11-20"]),
            &refs,
            &rule,
        );
        assert_eq!(r.performance_ratio, 1.0);
        assert_eq!(r.false_alarms, 0);

        let far = score_performance(
            &scan_with_onsets(&["2020-03-30", "2020-07-21", "2020-12-10"]),
            &refs,
            &rule,
        );
        assert_eq!(far.performance_ratio, 0.0);
        assert_eq!(far.false_alarms, 3);

        let refs10: Vec<NaiveDate> = (0..10).map(|k| add_days(d("2020-01-01"), 60 * k)).collect();
        let onsets: Vec<String> = refs10[..7]
            .iter()
            .map(|r| add_days(*r, 3).to_string())
            .collect();
        let onsets: Vec<&str> = onsets.iter().map(String::as_str).collect();
        let r = score_performance(&scan_with_onsets(&onsets), &refs10, &rule);
        assert!((r.performance_ratio - 0.7).abs() < 1e-15);
    }

    #[test]
    fn each_reference_matched_once() {
        let rule = DetectionRule::default();
        let refs = [d("2020-03-10")];
        let r = score_performance(
            &scan_with_onsets(&["2020-03-08", "2020-03-11"]),
            &refs,
            &rule,
        );
        assert_eq!(r.matched.len(), 1);
        assert_eq!(r.matched[0].predicted_onset, d("2020-03-08"));
        assert_eq!(r.false_alarms, 1);
        let none = score_performance(&scan_with_onsets(&["2020-03-08"]), &[], &rule);
        assert_eq!(none.performance_ratio, 0.0);
    }

    #[test]
    fn onsets_from_phase_model() {
        let endemic = |t0: &str, t1: &str| {
            Segment::Endemic(EndemicSegment {
                t0: d(t0),
                t1: d(t1),
                n0: 0.0,
                a: 1.0,
            })
        };
        let epidemic = |t0: &str, t1: &str| {
            Segment::Epidemic(EpidemicSegment {
                t0: d(t0),
                t1: d(t1),
                params: EpidemicParams {
                    n_base: 0.0,
                    n0: 1.0,
                    n_inf: 10.0,
                    chi: 0.1,
                    theta: 1.0,
                },
            })
        };
        let pm = PhaseModel {
            label: String::new(),
            segments: vec![
                endemic("2020-01-01", "2020-02-01"),
                epidemic("2020-02-01", "2020-04-01"),
                endemic("2020-04-01", "2020-06-01"),
                epidemic("2020-06-01", "2020-08-01"),
            ],
        };
        assert_eq!(
            reference_onsets_from_phase_model(&pm),
            vec![d("2020-02-01"), d("2020-06-01")]
        );
        let only_endemic = PhaseModel {
            label: String::new(),
            segments: vec![endemic("2020-01-01", "2020-02-01")],
        };
        assert!(reference_onsets_from_phase_model(&only_endemic).is_empty());
    }

    #[test]
    fn overlay_flags() {
        let s = some(&[0.0, 0.5, 1.2, 1.5, 0.8, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let scan = threshold_events(&s, &DetectionRule::default()).unwrap();
        let report = score_performance(&scan, &[], &DetectionRule::default());
        let mut buf = Vec::new();
        report.write_overlay_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("2021-01-03,1.2,up\n"));
        assert!(text.contains("2021-01-05,0.8,down\n"));
        assert!(text.contains("2021-01-12,0,onset\n"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_score() -> impl Strategy<Value = Vec<Option<f64>>> {
            prop::collection::vec(prop::option::weighted(0.95, -2.0f64..3.0), 1..200)
        }

        proptest! {
            #[test]
            fn events_are_ordered_and_disjoint(values in arb_score()) {
                let scan = threshold_events(&score(&values), &DetectionRule::default()).unwrap();
                for e in &scan.events {
                    prop_assert!(e.down_crossing_date > e.up_crossing_date);
                }
                for w in scan.events.windows(2) {
                    prop_assert!(w[1].up_crossing_date > w[0].down_crossing_date);
                }
            }

            #[test]
            fn ratio_monotone_in_tolerance(
                values in arb_score(),
                refs in prop::collection::vec(0i64..220, 0..8),
                tol in 0u32..30,
                extra in 0u32..30,
            ) {
                let s = score(&values);
                let refs: Vec<NaiveDate> = refs.iter().map(|k| add_days(s.start_date, *k as usize)).collect();
                let narrow = DetectionRule { match_tolerance_days: tol, ..DetectionRule::default() };
                let wide = DetectionRule { match_tolerance_days: tol + extra, ..DetectionRule::default() };
                let scan = threshold_events(&s, &narrow).unwrap();
                let a = score_performance(&scan, &refs, &narrow);
                let b = score_performance(&scan, &refs, &wide);
                prop_assert!(b.performance_ratio >= a.performance_ratio);
            }
        }
    }
}
