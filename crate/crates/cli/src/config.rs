//! Run configuration: defaults, overridden by flags, overridden by the
//! `--config` JSON file, with the output directory finally taken from
//! `EPIWAVE_OUT_DIR` when set.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use epiwave::detector::DetectionRule;
use epiwave::indicators::{EntropyMode, IndicatorConfig};
use epiwave::series::{CsvOptions, FillPolicy};
use serde::{Deserialize, Serialize};

pub const OUT_DIR_ENV: &str = "EPIWAVE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EntropyKind {
    Apen,
    Shannon,
}

/// Rows that feed the PCA fit. Scores are always computed for every row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PcaRows {
    /// Every valid row
    All,
    /// Only rows dated inside endemic phases of the breakpoints file
    Endemic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub date_column: String,
    pub value_column: String,
    pub filter_column: Option<String>,
    pub filter_value: Option<String>,
    pub fill: FillPolicy,
    pub window: usize,
    pub entropy: EntropyKind,
    pub apen_m: usize,
    pub r_factor: f64,
    pub bins: usize,
    pub pca_rows: PcaRows,
    pub threshold: f64,
    pub lead_days: u32,
    pub match_tolerance: u32,
    pub breakpoints: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            date_column: "date".into(),
            value_column: "value".into(),
            filter_column: None,
            filter_value: None,
            fill: FillPolicy::ZeroFill,
            window: 14,
            entropy: EntropyKind::Apen,
            apen_m: 2,
            r_factor: 0.2,
            bins: 5,
            pca_rows: PcaRows::All,
            threshold: 1.0,
            lead_days: 7,
            match_tolerance: 14,
            breakpoints: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_fill(s: &str) -> Result<FillPolicy, String> {
    match s {
        "zero-fill" => Ok(FillPolicy::ZeroFill),
        "forward-fill" => Ok(FillPolicy::ForwardFill),
        _ => Err(format!("expected zero-fill or forward-fill, got {s}")),
    }
}

/// Optional overrides, read either from flags or from the `--config` file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Daily-case CSV
    #[arg(long, global = true, value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// Date column of the input CSV [default: date]
    #[arg(long, global = true)]
    pub date_column: Option<String>,
    /// Value column of the input CSV [default: value]
    #[arg(long, global = true)]
    pub value_column: Option<String>,
    /// Keep only rows whose COLUMN equals --filter-value
    #[arg(long, global = true, value_name = "COLUMN", requires = "filter_value")]
    pub filter_column: Option<String>,
    /// Value kept by --filter-column
    #[arg(long, global = true, value_name = "VALUE", requires = "filter_column")]
    pub filter_value: Option<String>,
    /// Missing-date policy: zero-fill or forward-fill [default: zero-fill]
    #[arg(long, global = true, value_parser = parse_fill)]
    pub fill: Option<FillPolicy>,
    /// Trailing window length in days [default: 14]
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Entropy indicator [default: apen]
    #[arg(long, global = true, value_enum)]
    pub entropy: Option<EntropyKind>,
    /// ApEn template length [default: 2]
    #[arg(long, global = true)]
    pub apen_m: Option<usize>,
    /// ApEn tolerance as a fraction of the window std [default: 0.2]
    #[arg(long, global = true)]
    pub r_factor: Option<f64>,
    /// Histogram bins for Shannon entropy [default: 5]
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Rows fitting the PCA: all, or endemic (needs --breakpoints) [default: all]
    #[arg(long, global = true, value_enum)]
    pub pca_rows: Option<PcaRows>,
    /// Score threshold [default: 1]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Days from down-crossing to predicted onset [default: 7]
    #[arg(long, global = true)]
    pub lead_days: Option<u32>,
    /// Match tolerance in days [default: 14]
    #[arg(long, global = true)]
    pub match_tolerance: Option<u32>,
    /// Breakpoint JSON (`[{"date": ..., "phase": "endemic"|"epidemic"}]`)
    #[arg(long, global = true, value_name = "JSON")]
    pub breakpoints: Option<PathBuf>,
    /// Output directory [default: out; env EPIWAVE_OUT_DIR wins]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> anyhow::Result<ConfigLayer> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {
                $(if self.$field.is_some() { cfg.$field = self.$field; })*
            };
        }
        set!(
            date_column,
            value_column,
            fill,
            window,
            entropy,
            apen_m,
            r_factor,
            bins
        );
        set!(pca_rows, threshold, lead_days, match_tolerance, out_dir);
        set_opt!(input, filter_column, filter_value, breakpoints);
    }
}

impl RunConfig {
    pub fn resolve(
        flags: ConfigLayer,
        file: Option<&Path>,
        env_out_dir: Option<PathBuf>,
    ) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        flags.apply(&mut cfg);
        if let Some(path) = file {
            ConfigLayer::from_file(path)?.apply(&mut cfg);
        }
        if let Some(dir) = env_out_dir.filter(|d| !d.as_os_str().is_empty()) {
            cfg.out_dir = dir;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.window < 2 {
            bail!("window must be at least 2, got {}", self.window);
        }
        if self.apen_m == 0 {
            bail!("apen_m must be at least 1");
        }
        if !self.r_factor.is_finite() || self.r_factor <= 0.0 {
            bail!("r_factor must be positive, got {}", self.r_factor);
        }
        if self.bins == 0 {
            bail!("bins must be at least 1");
        }
        if !self.threshold.is_finite() {
            bail!("threshold must be finite");
        }
        if self.pca_rows == PcaRows::Endemic && self.breakpoints.is_none() {
            bail!("pca_rows = endemic needs a breakpoints file");
        }
        if self.filter_column.is_some() != self.filter_value.is_some() {
            bail!("filter_column and filter_value go together");
        }
        Ok(())
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            date_column: self.date_column.clone(),
            value_column: self.value_column.clone(),
            fill: self.fill,
            filter: self.filter_column.clone().zip(self.filter_value.clone()),
        }
    }

    pub fn indicator_config(&self) -> IndicatorConfig {
        IndicatorConfig {
            window: self.window,
            entropy: match self.entropy {
                EntropyKind::Apen => EntropyMode::Apen {
                    m: self.apen_m,
                    r_factor: self.r_factor,
                },
                EntropyKind::Shannon => EntropyMode::Shannon { bins: self.bins },
            },
        }
    }

    pub fn rule(&self) -> DetectionRule {
        DetectionRule {
            threshold: self.threshold,
            lead_days: self.lead_days,
            match_tolerance_days: self.match_tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_flags_file_env() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.json");
        std::fs::write(&file, r#"{"window": 21, "threshold": 0.5}"#).unwrap();
        let flags = ConfigLayer {
            window: Some(10),
            lead_days: Some(3),
            out_dir: Some("flag-out".into()),
            ..ConfigLayer::default()
        };
        let cfg = RunConfig::resolve(flags, Some(&file), Some("env-out".into())).unwrap();
        assert_eq!(cfg.window, 21);
        assert_eq!(cfg.threshold, 0.5);
        assert_eq!(cfg.lead_days, 3);
        assert_eq!(cfg.match_tolerance, 14);
        assert_eq!(cfg.out_dir, PathBuf::from("env-out"));
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        let flags = ConfigLayer {
            window: Some(1),
            ..ConfigLayer::default()
        };
        assert!(RunConfig::resolve(flags, None, None).is_err());

        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.json");
        std::fs::write(&file, r#"{"windw": 21}"#).unwrap();
        assert!(RunConfig::resolve(ConfigLayer::default(), Some(&file), None).is_err());
    }
}
