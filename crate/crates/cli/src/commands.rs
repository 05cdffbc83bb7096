//! Stage implementations. Every command writes its artifacts into the
//! output directory, then `<command>.manifest.json`, also on failure so
//! partial outputs stay traceable.

use std::path::Path;

use anyhow::anyhow;
use chrono::NaiveDate;
use epiwave::detector::{score_performance, threshold_events, DetectionReport};
use epiwave::indicators::{indicator_series, IndicatorSeries};
use epiwave::pca::{pca_fit, pca_fit_masked, score_pc1, PcaModel, ScoreSeries};
use epiwave::phenomodel::{
    assemble_phase_model, breakpoints_from_json, breakpoints_to_json, Breakpoint, FitOptions,
    Phase, PhaseFit, SegmentReport,
};
use epiwave::series::{cumulate, parse_csv_reader, rolling_average, CaseSeries};
use epiwave::synth::{generate, SynthSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{PcaRows, RunConfig};
use crate::plot::{self, Line};
use crate::{Failure, Outcome};

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    command: &'static str,
    status: String,
    warnings: &'a [String],
    config: &'a RunConfig,
    inputs: &'a [InputDigest],
    outputs: &'a [String],
}

struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, command: &'static str) -> Outcome<Run<'a>> {
        std::fs::create_dir_all(&cfg.out_dir)
            .map_err(|e| Failure::Input(anyhow!("creating {}: {e}", cfg.out_dir.display())))?;
        Ok(Run {
            cfg,
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn read(&mut self, path: &Path) -> Outcome<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Failure::Input(anyhow!("file not found: {}", path.display()))
            }
            _ => Failure::Input(anyhow!("reading {}: {e}", path.display())),
        })?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn read_text(&mut self, path: &Path) -> Outcome<String> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| Failure::Input(anyhow!("{} is not UTF-8", path.display())))
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Outcome<()> {
        let path = self.cfg.out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| Failure::Input(anyhow!("writing {}: {e}", path.display())))?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn finish(mut self, result: Outcome<()>) -> Outcome<()> {
        let status = match &result {
            Ok(()) => "ok".to_string(),
            Err(f) => format!("failed: {:#}", f.error()),
        };
        let name = format!("{}.manifest.json", self.command);
        let manifest = Manifest {
            software: "epiwave",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            status,
            warnings: &self.warnings,
            config: self.cfg,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Input(e.into()))?;
        self.write(&name, text + "\n")?;
        result
    }
}

fn run(
    cfg: &RunConfig,
    command: &'static str,
    body: impl FnOnce(&mut Run) -> Outcome<()>,
) -> Outcome<()> {
    let mut r = Run::new(cfg, command)?;
    let result = body(&mut r);
    r.finish(result)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> epiwave::Result<()>) -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_text(text: epiwave::Result<String>) -> Outcome<String> {
    Ok(text? + "\n")
}

// ---------------------------------------------------------------- stages

fn load_cases(r: &mut Run) -> Outcome<CaseSeries> {
    let cfg = r.cfg;
    let path = cfg
        .input
        .as_deref()
        .ok_or_else(|| Failure::Config(anyhow!("no input file (use --input)")))?;
    let bytes = r.read(path)?;
    let opts = cfg.csv_options();
    let mut ingested = parse_csv_reader(&bytes[..], &opts)?;
    ingested.series.label = match &opts.filter {
        Some((_, value)) => value.clone(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    if ingested.clamped > 0 {
        r.warn(format!("{} negative values clamped to 0", ingested.clamped));
    }
    if ingested.filled > 0 {
        log::info!("{} missing days filled ({:?})", ingested.filled, cfg.fill);
    }
    Ok(ingested.series)
}

fn write_cases(r: &mut Run, cases: &CaseSeries) -> Outcome<()> {
    let bytes = csv_bytes(|b| cases.write_csv(b))?;
    r.write("cases.csv", bytes)
}

fn compute_indicators(r: &mut Run, cases: &CaseSeries) -> Outcome<IndicatorSeries> {
    let ind = indicator_series(cases, &r.cfg.indicator_config())?;
    let bytes = csv_bytes(|b| ind.write_csv(b))?;
    r.write("indicators.csv", bytes)?;
    Ok(ind)
}

/// True for rows dated inside an endemic phase.
fn endemic_mask(ind: &IndicatorSeries, bps: &[Breakpoint]) -> Vec<bool> {
    (0..ind.len())
        .map(|i| {
            let date = ind.start_date + chrono::Days::new(i as u64);
            bps.iter()
                .rev()
                .find(|b| b.date <= date)
                .is_some_and(|b| b.phase == Phase::Endemic)
        })
        .collect()
}

fn fit_pca(r: &mut Run, ind: &IndicatorSeries, bps: Option<&[Breakpoint]>) -> Outcome<PcaModel> {
    let model = match (r.cfg.pca_rows, bps) {
        (PcaRows::All, _) => pca_fit(ind)?,
        (PcaRows::Endemic, Some(bps)) => pca_fit_masked(ind, Some(&endemic_mask(ind, bps)))?,
        (PcaRows::Endemic, None) => {
            return Err(Failure::Config(anyhow!(
                "pca_rows = endemic needs a readable breakpoints file"
            )))
        }
    };
    log::info!("PC1 explains {:.2}% of the variance", model.explained[0]);
    r.write("pca_model.json", json_text(model.to_json())?)?;
    Ok(model)
}

fn write_score(r: &mut Run, model: &PcaModel, ind: &IndicatorSeries) -> Outcome<ScoreSeries> {
    let score = score_pc1(model, ind);
    let bytes = csv_bytes(|b| score.write_csv(b))?;
    r.write("score.csv", bytes)?;
    Ok(score)
}

/// Breakpoints from the configured file; `None` when none is configured.
fn load_breakpoints(r: &mut Run) -> Outcome<Option<Vec<Breakpoint>>> {
    let Some(path) = r.cfg.breakpoints.clone() else {
        return Ok(None);
    };
    let text = r.read_text(&path)?;
    Ok(Some(breakpoints_from_json(&text)?))
}

fn epidemic_onsets(bps: &[Breakpoint]) -> Vec<NaiveDate> {
    bps.iter()
        .filter(|b| b.phase == Phase::Epidemic)
        .map(|b| b.date)
        .collect()
}

fn run_detection(
    r: &mut Run,
    score: &ScoreSeries,
    bps: &[Breakpoint],
    label: &str,
) -> Outcome<DetectionReport> {
    let rule = r.cfg.rule();
    let scan = threshold_events(score, &rule)?;
    let report = score_performance(&scan, &epidemic_onsets(bps), &rule);
    r.write("detection.json", json_text(report.to_json())?)?;
    let overlay = csv_bytes(|b| report.write_overlay_csv(score, b))?;
    r.write("detection_overlay.csv", overlay)?;
    let predicted: Vec<NaiveDate> = report
        .events
        .iter()
        .map(|e| e.predicted_onset_date)
        .collect();
    let svg = plot::score_svg(
        &format!("{label}: first principal component C1(t)"),
        Line {
            label: "C1",
            color: "#000000",
            start: score.start_date,
            values: score.values.clone(),
        },
        rule.threshold,
        bps,
        &predicted,
    );
    r.write("score.svg", svg)?;
    Ok(report)
}

/// Drops breakpoints before `start`; the phase in force at `start` is kept
/// as a breakpoint on `start` itself.
fn clip_breakpoints(bps: &[Breakpoint], start: NaiveDate) -> Vec<Breakpoint> {
    let mut out: Vec<Breakpoint> = bps.iter().filter(|b| b.date >= start).copied().collect();
    let in_force = bps.iter().rev().find(|b| b.date < start);
    if let Some(b) = in_force {
        if out.first().is_none_or(|f| f.date > start) {
            out.insert(
                0,
                Breakpoint {
                    date: start,
                    phase: b.phase,
                },
            );
        }
    }
    out
}

#[derive(Serialize)]
struct FitReport<'a> {
    label: &'a str,
    smoothing_window: usize,
    all_converged: bool,
    max_join_gap: f64,
    segments: &'a [SegmentReport],
}

fn run_fit(
    r: &mut Run,
    cases: &CaseSeries,
    bps: &[Breakpoint],
    refine: Option<usize>,
) -> Outcome<PhaseFit> {
    let window = r.cfg.window;
    let smooth = rolling_average(cases, window)?;
    let c = cumulate(&smooth);
    let bps = clip_breakpoints(bps, c.start_date);
    let opts = FitOptions {
        refine_radius: refine,
        ..FitOptions::default()
    };
    let fit = assemble_phase_model(&c, &bps, &cases.label, &opts)?;
    let report = FitReport {
        label: &cases.label,
        smoothing_window: window,
        all_converged: fit.all_converged(),
        max_join_gap: fit.model.max_join_gap(),
        segments: &fit.reports,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.into()))?;
    r.write("fit.json", text + "\n")?;
    r.write("phase_model.json", json_text(fit.model.to_json())?)?;
    let curves = csv_bytes(|b| fit.model.write_curves_csv(b))?;
    r.write("model_curves.csv", curves)?;

    let points = fit.model.curves();
    let per_segment = |daily: bool| -> Vec<Line<'static>> {
        let segs = &fit.model.segments;
        segs.iter()
            .enumerate()
            .map(|(i, s)| {
                let end = segs.get(i + 1).map(|n| n.t0());
                Line {
                    label: "model",
                    color: "",
                    start: s.t0(),
                    values: points
                        .iter()
                        .filter(|p| p.date >= s.t0() && end.is_none_or(|e| p.date < e))
                        .map(|p| Some(if daily { p.daily } else { p.cumulative }))
                        .collect(),
                }
            })
            .collect()
    };
    let bps = fit.model.breakpoints();
    let cumulative_svg = plot::model_svg(
        &format!("{}: cumulative cases and fitted model", cases.label),
        "cumulative cases",
        Line {
            label: "data",
            color: "#000000",
            start: c.start_date,
            values: c.values.iter().copied().map(Some).collect(),
        },
        per_segment(false),
        &bps,
    );
    r.write("cumulative.svg", cumulative_svg)?;
    let daily_svg = plot::model_svg(
        &format!(
            "{}: daily cases ({window}-day average) and model derivative",
            cases.label
        ),
        "daily cases",
        Line {
            label: "data",
            color: "#000000",
            start: smooth.start_date,
            values: smooth.values.iter().copied().map(Some).collect(),
        },
        per_segment(true),
        &bps,
    );
    r.write("daily.svg", daily_svg)?;

    if !fit.all_converged() {
        let bad: Vec<String> = fit
            .reports
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.converged)
            .map(|(i, _)| i.to_string())
            .collect();
        return Err(Failure::Numerical(anyhow!(
            "fit did not converge for segment(s) {}",
            bad.join(", ")
        )));
    }
    Ok(fit)
}

// ---------------------------------------------------------------- commands

pub fn ingest(cfg: &RunConfig) -> Outcome<()> {
    run(cfg, "ingest", |r| {
        let cases = load_cases(r)?;
        write_cases(r, &cases)
    })
}

pub fn indicators(cfg: &RunConfig) -> Outcome<()> {
    run(cfg, "indicators", |r| {
        let cases = load_cases(r)?;
        compute_indicators(r, &cases).map(drop)
    })
}

pub fn pca(cfg: &RunConfig, indicators: &Path) -> Outcome<()> {
    run(cfg, "pca", |r| {
        let bytes = r.read(indicators)?;
        let ind = IndicatorSeries::read_csv(&bytes[..], cfg.window)?;
        let bps = match cfg.pca_rows {
            PcaRows::All => None,
            PcaRows::Endemic => load_breakpoints(r)?,
        };
        fit_pca(r, &ind, bps.as_deref()).map(drop)
    })
}

pub fn score(cfg: &RunConfig, indicators: &Path, model: &Path) -> Outcome<()> {
    run(cfg, "score", |r| {
        let bytes = r.read(indicators)?;
        let ind = IndicatorSeries::read_csv(&bytes[..], cfg.window)?;
        let model = PcaModel::from_json(&r.read_text(model)?)?;
        write_score(r, &model, &ind).map(drop)
    })
}

pub fn detect(cfg: &RunConfig, score_path: &Path) -> Outcome<()> {
    run(cfg, "detect", |r| {
        let bytes = r.read(score_path)?;
        let score = ScoreSeries::read_csv(&bytes[..])?;
        let bps = load_breakpoints(r)?.unwrap_or_else(|| {
            r.warn("no breakpoints file: no reference onsets, ratio reported as 0".into());
            Vec::new()
        });
        let label = score_path
            .file_stem()
            .map_or_else(|| "score".into(), |s| s.to_string_lossy().into_owned());
        run_detection(r, &score, &bps, &label).map(drop)
    })
}

pub fn fit(cfg: &RunConfig, refine: Option<usize>) -> Outcome<()> {
    run(cfg, "fit", |r| {
        let cases = load_cases(r)?;
        let bps = load_breakpoints(r)?.ok_or_else(|| {
            Failure::Config(anyhow!("fit needs a breakpoints file (use --breakpoints)"))
        })?;
        run_fit(r, &cases, &bps, refine).map(drop)
    })
}

pub fn synth(cfg: &RunConfig, spec: &Path) -> Outcome<()> {
    run(cfg, "synth", |r| {
        let spec = SynthSpec::from_json(&r.read_text(spec)?)?;
        let out = generate(&spec)?;
        write_cases(r, &out.series)?;
        r.write("truth.json", json_text(out.truth.to_json())?)?;
        r.write(
            "breakpoints.json",
            json_text(breakpoints_to_json(&out.truth.breakpoints()))?,
        )
    })
}

pub fn pipeline(cfg: &RunConfig) -> Outcome<()> {
    run(cfg, "pipeline", |r| {
        let cases = load_cases(r)?;
        write_cases(r, &cases)?;
        let ind = compute_indicators(r, &cases)?;
        let bps = match cfg.breakpoints.as_deref() {
            Some(path) if path.exists() => load_breakpoints(r)?,
            Some(path) => {
                r.warn(format!(
                    "breakpoints file {} not found: fit stage skipped",
                    path.display()
                ));
                None
            }
            None => {
                r.warn("no breakpoints file: fit stage skipped".into());
                None
            }
        };
        let model = fit_pca(r, &ind, bps.as_deref())?;
        let score = write_score(r, &model, &ind)?;
        run_detection(r, &score, bps.as_deref().unwrap_or(&[]), &cases.label)?;
        if let Some(bps) = bps {
            run_fit(r, &cases, &bps, None)?;
        }
        Ok(())
    })
}
