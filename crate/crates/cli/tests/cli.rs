use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bdar::harness::{McDesign, StudyMode};
use bdar::BdarParams;
use serde_json::Value;

fn bdar() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bdar"));
    c.env_remove("BDAR_THREADS");
    c
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, params: &BdarParams, n: usize, seed: u64, name: &str) -> PathBuf {
    let pfile = write_json(dir, &format!("{name}.params.json"), params);
    let out = dir.join(format!("{name}.csv"));
    run_ok(bdar().args(["simulate", "--n", &n.to_string(), "--seed", &seed.to_string()]).arg("--params").arg(&pfile).arg("--out").arg(&out));
    out
}

/// Validates `doc` against a schema in `schemas/` with Python's jsonschema.
/// Returns false (and the check is skipped) when that is unavailable.
fn schema_check(doc: &Path, schema: &str) -> bool {
    let schema = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(schema);
    let script = "import json,sys,jsonschema\n\
                  jsonschema.validate(json.load(open(sys.argv[1])), json.load(open(sys.argv[2])))";
    let Ok(out) = Command::new("python3").args(["-c", script]).arg(doc).arg(&schema).output() else {
        eprintln!("python3 not found; schema check skipped");
        return false;
    };
    let err = String::from_utf8_lossy(&out.stderr);
    if err.contains("No module named 'jsonschema'") {
        eprintln!("jsonschema not installed; schema check skipped");
        return false;
    }
    assert!(out.status.success(), "{} fails {}: {err}", doc.display(), schema.display());
    true
}

#[test]
fn simulate_writes_a_bit_exact_csv() {
    let dir = tempfile::tempdir().unwrap();
    let params = BdarParams::reference_design();
    let path = simulate(dir.path(), &params, 300, 41, "y");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y"));
    let got: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();

    let want = bdar::model::simulate_path(
        &params,
        300,
        &bdar::InnovationSpec::StandardNormal,
        &bdar::model::SimulationOptions { burn_in: 500, pre_sample_len: Some(6) },
        41,
    )
    .unwrap();
    assert_eq!(got.len(), 306);
    for (a, b) in got.iter().zip(want.series.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn weekly_fit_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let truth = BdarParams::weekly_returns_fit();
    let n = 2000;
    let data = simulate(dir.path(), &truth, n, 2718, "weekly");
    let fit_out = dir.path().join("fit.json");
    run_ok(
        bdar()
            .args(["fit", "--p", "3", "--fast", "--pre-sample", "6"])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&fit_out),
    );
    let fit = read_json(&fit_out);
    schema_check(&fit_out, "fit.schema.json");

    assert_eq!(fit["params"]["d"], 1);
    // thresholds are super-consistent: allow K order statistics of the
    // effective sample between estimate and truth
    const K: usize = 10;
    let y: Vec<f64> = std::fs::read_to_string(&data).unwrap().lines().skip(7).map(|l| l.parse().unwrap()).collect();
    for (key, r) in [("r_lower", truth.r_lower), ("r_upper", truth.r_upper)] {
        let est = fit["params"][key].as_f64().unwrap();
        let (lo, hi) = if est < r { (est, r) } else { (r, est) };
        let between = y.iter().filter(|v| **v > lo && **v < hi).count();
        assert!(between <= K, "{key}: {est} vs {r}, {between} order statistics apart");
    }

    let truth_lambda = truth.lambda();
    for (c, want) in fit["coefficients"].as_array().unwrap().iter().zip(truth_lambda) {
        let est = c["estimate"].as_f64().unwrap();
        let se = c["std_error"].as_f64().unwrap();
        assert!((est - want).abs() <= 4.0 * se, "{}: {est} vs {want} (se {se})", c["name"]);
    }

    let diag_out = dir.path().join("diag.json");
    let acf_out = dir.path().join("acf.csv");
    run_ok(
        bdar()
            .args(["diagnose", "--m", "6,12", "--acf-lags", "10", "--fit"])
            .arg(&fit_out)
            .arg("--out")
            .arg(&diag_out)
            .arg("--acf-out")
            .arg(&acf_out),
    );
    schema_check(&diag_out, "diagnose.schema.json");
    let diag = read_json(&diag_out);
    assert_eq!(diag["ljung_box"].as_array().unwrap().len(), 2);
    let acf = std::fs::read_to_string(&acf_out).unwrap();
    assert_eq!(acf.lines().next(), Some("lag,acf_residuals,acf_squared,band"));
    assert_eq!(acf.lines().count(), 11);
}

#[test]
fn stationarity_report_for_the_reference_design() {
    let dir = tempfile::tempdir().unwrap();
    let pfile = write_json(dir.path(), "p.json", &BdarParams::reference_design());
    let out = dir.path().join("s.json");
    run_ok(bdar().arg("check-stationarity").arg("--params").arg(&pfile).arg("--out").arg(&out));
    schema_check(&out, "check-stationarity.schema.json");
    let s = read_json(&out);
    assert_eq!(s["condition_i"]["holds"], false);
    assert_eq!(s["condition_ii"]["holds"], true);
    assert_eq!(s["condition_iii"]["holds"], false);
    assert!((s["condition_ii"]["value"].as_f64().unwrap() - 0.65).abs() < 1e-12);
}

#[test]
fn select_reports_one_row_per_order() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &BdarParams::reference_design(), 300, 8, "y");
    let out = dir.path().join("sel.json");
    run_ok(
        bdar()
            .args(["select", "--p-max", "3", "--fast", "--d-max", "4"])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out),
    );
    schema_check(&out, "select.schema.json");
    let s = read_json(&out);
    let rows = s["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r["p"].as_u64().unwrap()).collect::<Vec<_>>(), [1, 2, 3]);
    let best = rows
        .iter()
        .min_by(|a, b| a["bic"].as_f64().unwrap().total_cmp(&b["bic"].as_f64().unwrap()))
        .unwrap();
    assert_eq!(best["p"], s["chosen_p"]);
}

#[test]
fn mc_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let design = McDesign::reference(vec![150], 3, 5);
    let dfile = write_json(dir.path(), "design.json", &design);
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        run_ok(bdar().env("BDAR_THREADS", threads).arg("mc").arg("--design").arg(&dfile).arg("--out-dir").arg(&out));
        out
    };
    let one = run("1");
    let three = run("3");
    for name in ["report.json", "threshold_devs_n150.csv"] {
        assert_eq!(std::fs::read(one.join(name)).unwrap(), std::fs::read(three.join(name)).unwrap(), "{name}");
    }
    schema_check(&one.join("report.json"), "mc.schema.json");

    let mut sel = McDesign::reference(vec![150], 2, 6);
    sel.mode = StudyMode::SelectionStudy;
    sel.p_max = 2;
    let sfile = write_json(dir.path(), "sel.json", &sel);
    let out = run_ok(bdar().arg("mc").arg("--design").arg(&sfile));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mode"], "selection_study");
    assert!(String::from_utf8_lossy(&out.stderr).contains("wall time"));
}

#[test]
fn simulate_summary_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let pfile = write_json(dir.path(), "p.json", &BdarParams::reference_design());
    let json = dir.path().join("sim.json");
    run_ok(
        bdar()
            .args(["simulate", "--n", "50", "--seed", "1", "--innovations", "t:5"])
            .arg("--params")
            .arg(&pfile)
            .arg("--out")
            .arg(dir.path().join("y.csv"))
            .arg("--json-out")
            .arg(&json),
    );
    schema_check(&json, "simulate.schema.json");
    let s = read_json(&json);
    assert_eq!(s["n_lower"].as_u64().unwrap() + s["n_upper"].as_u64().unwrap(), 50);
}

fn exit_code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let (code, err) = exit_code(bdar().args(["fit", "--p", "2", "--data"]).arg(&missing));
    assert_eq!(code, 3, "{err}");
    assert!(err.starts_with("error[io]"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let (code, _) = exit_code(bdar().args(["fit", "--data", "x.csv"]));
    assert_eq!(code, 2);
    let (code, _) = exit_code(bdar().args(["simulate", "--innovations", "t:1"]));
    assert_eq!(code, 2);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y\n0.1\nnot-a-number\n").unwrap();
    let (code, err) = exit_code(bdar().args(["fit", "--p", "1", "--data"]).arg(&bad));
    assert_eq!(code, 3, "{err}");

    let data = simulate(dir.path(), &BdarParams::reference_design(), 300, 3, "y");
    let (code, err) = exit_code(
        bdar()
            .args(["fit", "--p", "2", "--pct-lo", "1", "--pct-hi", "2", "--min-regime-frac", "0.3", "--data"])
            .arg(&data),
    );
    assert_eq!(code, 4, "{err}");
    assert!(err.starts_with("error[search_failed]"), "{err}");

    let (code, err) = exit_code(bdar().env("BDAR_THREADS", "zero").args(["fit", "--p", "2", "--data"]).arg(&data));
    assert_eq!(code, 2, "{err}");
}
