//! Deterministic SVG figures. Coordinates are printed with two decimals so
//! identical inputs give byte-identical files.

use std::fmt::Write;

use chrono::NaiveDate;
use epiwave::phenomodel::{Breakpoint, Phase};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

const ENDEMIC_FILL: &str = "#fdf1b8";
const EPIDEMIC_FILL: &str = "#cfe2f7";
const GUIDE: &str = "#2ca02c";
const SEGMENT_COLORS: [&str; 6] = [
    "#d62728", "#1f77b4", "#ff7f0e", "#9467bd", "#2ca02c", "#8c564b",
];

/// A named polyline; `None` values break the line.
pub struct Line<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub start: NaiveDate,
    pub values: Vec<Option<f64>>,
}

struct Frame {
    start: NaiveDate,
    days: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, date: NaiveDate) -> f64 {
        let d = (date - self.start).num_days() as f64;
        LEFT + (WIDTH - LEFT - RIGHT) * d / self.days.max(1.0)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(f64::MIN_POSITIVE);
        HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * (v - self.y_min) / span
    }
}

fn frame(lines: &[Line], extra_y: &[f64]) -> Option<Frame> {
    let start = lines.iter().map(|l| l.start).min()?;
    let end = lines
        .iter()
        .map(|l| l.start + chrono::Days::new(l.values.len().saturating_sub(1) as u64))
        .max()?;
    let finite = lines
        .iter()
        .flat_map(|l| l.values.iter().flatten().copied())
        .chain(extra_y.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    Some(Frame {
        start,
        days: (end - start).num_days() as f64,
        y_min: lo - pad,
        y_max: hi + pad,
    })
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bands(out: &mut String, f: &Frame, bps: &[Breakpoint], end: NaiveDate) {
    for (i, bp) in bps.iter().enumerate() {
        let next = bps.get(i + 1).map_or(end, |b| b.date);
        let (x0, x1) = (f.x(bp.date).max(LEFT), f.x(next).min(WIDTH - RIGHT));
        if x1 <= x0 {
            continue;
        }
        let fill = match bp.phase {
            Phase::Endemic => ENDEMIC_FILL,
            Phase::Epidemic => EPIDEMIC_FILL,
        };
        let _ = writeln!(
            out,
            r#"<rect class="{}" x="{x0:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            match bp.phase {
                Phase::Endemic => "endemic",
                Phase::Epidemic => "epidemic",
            },
            x1 - x0,
            HEIGHT - TOP - BOTTOM
        );
    }
}

fn axes(out: &mut String, f: &Frame, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y1 - y0
    );
    for k in 0..=4 {
        let v = f.y_min + (f.y_max - f.y_min) * f64::from(k) / 4.0;
        let y = f.y(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
    for k in 0..=5 {
        let d = (f.days * f64::from(k) / 5.0).round() as u64;
        let date = f.start + chrono::Days::new(d);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{date}</text>"#,
            f.x(date),
            y1 + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.3e}")
    } else if v.abs() >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(out: &mut String, f: &Frame, line: &Line) {
    let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for (i, v) in line.values.iter().enumerate() {
        match v.filter(|v| v.is_finite()) {
            Some(v) => {
                let date = line.start + chrono::Days::new(i as u64);
                runs.last_mut().unwrap().push((f.x(date), f.y(v)));
            }
            None if !runs.last().unwrap().is_empty() => runs.push(Vec::new()),
            None => {}
        }
    }
    for run in runs.iter().filter(|r| !r.is_empty()) {
        let points: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(line.label),
            line.color,
            points.join(" ")
        );
    }
}

fn hline(out: &mut String, f: &Frame, v: f64, color: &str, class: &str) {
    let _ = writeln!(
        out,
        r#"<line class="{class}" x1="{LEFT:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"/>"#,
        WIDTH - RIGHT,
        y = f.y(v)
    );
}

fn vline(out: &mut String, f: &Frame, date: NaiveDate, color: &str, class: &str) {
    let x = f.x(date);
    if !(LEFT..=WIDTH - RIGHT).contains(&x) {
        return;
    }
    let _ = writeln!(
        out,
        r#"<line class="{class}" x1="{x:.2}" x2="{x:.2}" y1="{TOP:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 3"/>"#,
        HEIGHT - BOTTOM
    );
}

fn legend(out: &mut String, lines: &[Line]) {
    for (i, l) in lines.iter().enumerate() {
        let x = LEFT + 10.0 + 150.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 18.0,
            l.color,
            x + 22.0,
            TOP + 18.0,
            escape(l.label),
            y = TOP + 14.0
        );
    }
}

/// First-component score with guide lines at `+-threshold`, phase bands
/// and dashed markers at predicted onsets.
pub fn score_svg(
    title: &str,
    score: Line,
    threshold: f64,
    bps: &[Breakpoint],
    predicted: &[NaiveDate],
) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let lines = [score];
    if let Some(f) = frame(&lines, &[threshold, -threshold]) {
        let end = f.start + chrono::Days::new(f.days as u64);
        bands(&mut out, &f, bps, end);
        hline(&mut out, &f, threshold, GUIDE, "guide");
        hline(&mut out, &f, -threshold, GUIDE, "guide");
        for d in predicted {
            vline(&mut out, &f, *d, "#d62728", "predicted-onset");
        }
        polyline(&mut out, &f, &lines[0]);
        axes(&mut out, &f, "C1");
    }
    out.push_str("</svg>\n");
    out
}

/// Data against model, with each model segment in its own color.
pub fn model_svg(
    title: &str,
    y_label: &str,
    data: Line,
    segments: Vec<Line>,
    bps: &[Breakpoint],
) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let mut lines = vec![data];
    lines.extend(segments.into_iter().enumerate().map(|(i, mut l)| {
        l.color = SEGMENT_COLORS[i % SEGMENT_COLORS.len()];
        l
    }));
    if let Some(f) = frame(&lines, &[]) {
        let end = f.start + chrono::Days::new(f.days as u64);
        bands(&mut out, &f, bps, end);
        for l in &lines {
            polyline(&mut out, &f, l);
        }
        axes(&mut out, &f, y_label);
        legend(&mut out, &lines[..1]);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn score_plot_has_guides_bands_and_breaks_at_gaps() {
        let score = Line {
            label: "c1",
            color: "black",
            start: d("2021-01-01"),
            values: vec![Some(0.0), Some(1.5), None, Some(-0.5), Some(0.2)],
        };
        let bps = [
            Breakpoint {
                date: d("2021-01-01"),
                phase: Phase::Endemic,
            },
            Breakpoint {
                date: d("2021-01-03"),
                phase: Phase::Epidemic,
            },
        ];
        let svg = score_svg("t", score, 1.0, &bps, &[d("2021-01-04")]);
        assert_eq!(svg.matches(r#"class="guide""#).count(), 2);
        assert_eq!(svg.matches(r#"class="endemic""#).count(), 1);
        assert_eq!(svg.matches(r#"class="epidemic""#).count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("predicted-onset"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
