use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_epiwave");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn epiwave(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("EPIWAVE_OUT_DIR")
        .output()
        .expect("spawn epiwave")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_into(dir: &Path) {
    let o = epiwave(&[
        "synth",
        "--spec",
        s(&fixture("two_wave.json")),
        "--out-dir",
        s(dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn pipeline_writes_every_artifact_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let out = tmp.path().join("run");
    let o = epiwave(&[
        "pipeline",
        "--input",
        s(&data.join("cases.csv")),
        "--breakpoints",
        s(&data.join("breakpoints.json")),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in [
        "cases.csv",
        "indicators.csv",
        "pca_model.json",
        "score.csv",
        "detection.json",
        "detection_overlay.csv",
        "score.svg",
        "fit.json",
        "phase_model.json",
        "model_curves.csv",
        "cumulative.svg",
        "daily.svg",
        "pipeline.manifest.json",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }

    let manifest = json(&out.join("pipeline.manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["window"], 14);
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2);
    assert!(inputs
        .iter()
        .all(|i| i["sha256"].as_str().unwrap().len() == 64));

    let days = lines(&data.join("cases.csv")) - 1;
    assert_eq!(lines(&out.join("indicators.csv")) - 1, days - 13);

    let detection = json(&out.join("detection.json"));
    assert_eq!(detection["reference_onsets"].as_array().unwrap().len(), 2);
    let ratio = detection["performance_ratio"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ratio));

    let fit = json(&out.join("fit.json"));
    assert_eq!(fit["all_converged"], true);
    assert_eq!(fit["segments"].as_array().unwrap().len(), 5);

    let svg = std::fs::read_to_string(out.join("score.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="guide""#).count(), 2);
    assert!(svg.contains(r#"class="endemic""#));
    assert!(svg.contains(r#"class="epidemic""#));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = epiwave(&[
            "pipeline",
            "--input",
            s(&data.join("cases.csv")),
            "--breakpoints",
            s(&data.join("breakpoints.json")),
            "--out-dir",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "pipeline.manifest.json" {
            continue;
        }
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }

    let again = tmp.path().join("data2");
    synth_into(&again);
    assert_eq!(
        std::fs::read(data.join("cases.csv")).unwrap(),
        std::fs::read(again.join("cases.csv")).unwrap()
    );
}

#[test]
fn stages_chain_like_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let out = tmp.path().join("out");
    let o = |args: &[&str]| {
        let mut all = args.to_vec();
        all.extend(["--out-dir", s(&out)]);
        let o = epiwave(&all);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };
    let cases = data.join("cases.csv");
    o(&["indicators", "--input", s(&cases)]);
    o(&["pca", "--indicators", s(&out.join("indicators.csv"))]);
    o(&[
        "score",
        "--indicators",
        s(&out.join("indicators.csv")),
        "--model",
        s(&out.join("pca_model.json")),
    ]);
    let staged = std::fs::read(out.join("score.csv")).unwrap();

    let full = tmp.path().join("full");
    let p = epiwave(&["pipeline", "--input", s(&cases), "--out-dir", s(&full)]);
    assert!(p.status.success());
    assert_eq!(staged, std::fs::read(full.join("score.csv")).unwrap());

    let bps = data.join("breakpoints.json");
    o(&[
        "detect",
        "--score",
        s(&out.join("score.csv")),
        "--breakpoints",
        s(&bps),
    ]);
    o(&["fit", "--input", s(&cases), "--breakpoints", s(&bps)]);
    let p = epiwave(&[
        "pipeline",
        "--input",
        s(&cases),
        "--breakpoints",
        s(&bps),
        "--out-dir",
        s(&full),
    ]);
    assert!(p.status.success());
    for name in [
        "detection.json",
        "detection_overlay.csv",
        "fit.json",
        "model_curves.csv",
    ] {
        assert_eq!(
            std::fs::read(out.join(name)).unwrap(),
            std::fs::read(full.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn short_series_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("short.csv");
    let mut text = String::from("date,value\n");
    for d in 1..=10 {
        text.push_str(&format!("2021-01-{d:02},{d}\n"));
    }
    std::fs::write(&input, text).unwrap();
    let out = tmp.path().join("out");
    let o = epiwave(&["indicators", "--input", s(&input), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("series shorter than window"),
        "{}",
        stderr(&o)
    );
    let manifest = json(&out.join("indicators.manifest.json"));
    assert!(manifest["status"].as_str().unwrap().starts_with("failed"));
}

#[test]
fn missing_input_file_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = epiwave(&[
        "ingest",
        "--input",
        s(&tmp.path().join("nope.csv")),
        "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("file not found"));
}

#[test]
fn pipeline_without_breakpoints_skips_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let out = tmp.path().join("out");
    let o = epiwave(&[
        "pipeline",
        "--input",
        s(&data.join("cases.csv")),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("score.csv").is_file());
    assert!(!out.join("fit.json").exists());
    let manifest = json(&out.join("pipeline.manifest.json"));
    assert!(!manifest["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn fit_without_breakpoints_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let o = epiwave(&[
        "fit",
        "--input",
        s(&data.join("cases.csv")),
        "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_configuration_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"window": 0}"#).unwrap();
    let o = epiwave(&["ingest", "--config", s(&cfg), "--out-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));

    std::fs::write(&cfg, r#"{"colour": "red"}"#).unwrap();
    let o = epiwave(&["ingest", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(3));

    let o = epiwave(&["ingest", "--window", "many"]);
    assert_eq!(o.status.code(), Some(3));

    let o = epiwave(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"window": 21}"#).unwrap();
    let out = tmp.path().join("out");
    let o = epiwave(&[
        "indicators",
        "--input",
        s(&data.join("cases.csv")),
        "--window",
        "7",
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let days = lines(&data.join("cases.csv")) - 1;
    assert_eq!(lines(&out.join("indicators.csv")) - 1, days - 20);
}

#[test]
fn environment_sets_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("from-env");
    let o = Command::new(BIN)
        .args([
            "synth",
            "--spec",
            s(&fixture("two_wave.json")),
            "--out-dir",
            s(&tmp.path().join("from-flag")),
        ])
        .env("EPIWAVE_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.join("cases.csv").is_file());
    assert!(!tmp.path().join("from-flag").exists());
}

#[test]
fn filtered_multi_country_input() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("who.csv");
    let mut text = String::from("Date_reported,Country,New_cases\n");
    for d in 0..40u32 {
        let date =
            chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Days::new(d.into());
        text.push_str(&format!("{date},France,{}\n", 100 + d));
        text.push_str(&format!("{date},Japan,{}\n", 5 * d));
    }
    std::fs::write(&input, text).unwrap();
    let out = tmp.path().join("out");
    let o = epiwave(&[
        "ingest",
        "--input",
        s(&input),
        "--date-column",
        "Date_reported",
        "--value-column",
        "New_cases",
        "--filter-column",
        "Country",
        "--filter-value",
        "Japan",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cases = std::fs::read_to_string(out.join("cases.csv")).unwrap();
    assert_eq!(cases.lines().count(), 41);
    assert!(cases.lines().nth(2).unwrap().ends_with(",5"));
}

#[test]
fn pca_on_endemic_rows_only() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cases = data.join("cases.csv");
    let bps = data.join("breakpoints.json");
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["pipeline", "--input", s(&cases), "--breakpoints", s(&bps)];
        args.extend(extra);
        args.extend(["--out-dir", s(&out)]);
        let o = epiwave(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        json(&out.join("pca_model.json"))
    };
    let all = run("all", &[]);
    let endemic = run("endemic", &["--pca-rows", "endemic"]);
    assert_ne!(all["explained"], endemic["explained"]);

    let o = epiwave(&["pca", "--indicators", s(&cases), "--pca-rows", "endemic"]);
    assert_eq!(o.status.code(), Some(3));
}
