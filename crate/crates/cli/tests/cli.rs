use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tdsrobust::LkFunctional;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    repo().join("configs").join(name)
}

struct Run {
    code: i32,
    report: Value,
    stdout: String,
}

fn run(args: &[&str], cfg: &Path, out: Option<&Path>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tdsrobust"));
    cmd.args(args).arg("--config").arg(cfg);
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    let o = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(o.stdout).unwrap();
    let report = if args.contains(&"text") {
        Value::Null
    } else {
        serde_json::from_str(&stdout).expect("json report")
    };
    Run {
        code: o.status.code().unwrap(),
        report,
        stdout,
    }
}

fn num(r: &Value, path: &str) -> f64 {
    r.pointer(path)
        .and_then(Value::as_f64)
        .unwrap_or_else(|| panic!("{path} missing in {r:#}"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const BENCH_SYSTEM: &str =
    r#""system": { "a0": [[0, 1], [-1, -2]], "a1": [[0, 0], [-1, 1]], "h": 1 }"#;

#[test]
fn exit_codes() {
    assert_eq!(
        run(&["certify"], &config("benchmark_norm_bound.json"), None).code,
        0
    );
    assert_eq!(
        run(&["certify"], &config("benchmark_denied.json"), None).code,
        1
    );
    assert_eq!(run(&["certify"], &config("unstable.json"), None).code, 2);
    assert_eq!(run(&["bounds"], &config("unstable.json"), None).code, 2);
    assert_eq!(
        run(&["certify"], &repo().join("configs/missing.json"), None).code,
        3
    );
}

#[test]
fn bad_config_reports_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &format!(r#"{{ {BENCH_SYSTEM}, "sector": {{ "kind": "norm_bound", "gama": 0.1 }} }}"#),
    );
    let r = run(&["certify"], &cfg, None);
    assert_eq!(r.code, 3);
    let msg = r.report["messages"][0].as_str().unwrap();
    assert!(msg.contains("sector") && msg.contains("gama"), "{msg}");

    let cfg = write_config(
        dir.path(),
        "ragged.json",
        r#"{ "system": { "a0": [[0, 1], [-1]], "a1": [[0, 0], [-1, 1]], "h": 1 } }"#,
    );
    assert_eq!(run(&["bounds"], &cfg, None).code, 3);
    let cfg = write_config(
        dir.path(),
        "neg.json",
        &format!(r#"{{ {BENCH_SYSTEM}, "sector": {{ "kind": "norm_bound", "gamma": -1 }} }}"#),
    );
    assert_eq!(run(&["certify"], &cfg, None).code, 3);
}

#[test]
fn bounds_on_the_benchmark() {
    let r = run(&["bounds"], &config("benchmark_norm_bound.json"), None);
    assert_eq!(r.code, 0);
    assert!((num(&r.report, "/results/value") - 0.1059).abs() < 1e-4);
    let r = run(&["bounds"], &config("benchmark_structured.json"), None);
    assert!((num(&r.report, "/results/value") - 0.2462).abs() < 1e-4);
    let r = run(
        &["bounds", "--complete-type"],
        &config("benchmark_norm_bound.json"),
        None,
    );
    assert!((num(&r.report, "/results/complete_type/gamma") - 0.0227).abs() < 1e-4);
}

#[test]
fn complete_type_command() {
    let r = run(
        &["complete-type"],
        &config("benchmark_norm_bound.json"),
        None,
    );
    assert_eq!(r.code, 0);
    assert!((num(&r.report, "/results/gamma") - 0.02269).abs() < 1e-5);
}

#[test]
fn construct_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        &["construct"],
        &config("benchmark_norm_bound.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 0, "{:#}", r.report);
    assert!(num(&r.report, "/results/are/residual") <= 1e-8);
    assert!(num(&r.report, "/results/defining_residual_max") <= 1e-6);

    let text = std::fs::read_to_string(dir.path().join("functional.json")).unwrap();
    let lk = LkFunctional::from_json(&text).unwrap();
    assert_eq!(lk.to_json().unwrap(), text);

    let r = run(
        &["verify"],
        &config("benchmark_norm_bound.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 0, "{:#}", r.report);
    assert_eq!(r.report["results"]["trajectories"]["count"], 20);

    // A functional built for a different sector is refused.
    let other = write_config(
        dir.path(),
        "other.json",
        &format!(
            r#"{{ {BENCH_SYSTEM}, "sector": {{ "kind": "norm_bound", "gamma": 0.09 }}, "functional": "functional.json" }}"#
        ),
    );
    let r = run(&["verify"], &other, None);
    assert_eq!(r.code, 3);
    assert!(r.report["messages"][0].as_str().unwrap().contains("hash"));

    // A nonlinearity outside the sector is a violation.
    let loud = write_config(
        dir.path(),
        "loud.json",
        &format!(
            r#"{{ {BENCH_SYSTEM}, "sector": {{ "kind": "norm_bound", "gamma": 0.1 }}, "functional": "functional.json",
                 "simulation": {{ "trajectories": 2, "nonlinearity": {{ "kind": "linear_gain", "norm": 0.3 }} }} }}"#
        ),
    );
    let r = run(&["verify"], &loud, None);
    assert_eq!(r.code, 1, "{:#}", r.report);
}

#[test]
fn construct_refuses_when_the_test_fails() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        &["construct"],
        &config("benchmark_denied.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 1);
    assert!(!dir.path().join("functional.json").exists());
}

#[test]
fn delay_free_scalar_riccati_solution() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        &["construct"],
        &config("scalar_delay_free.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 0);
    assert!((num(&r.report, "/results/p_xx/0/0") - 0.2).abs() < 1e-9);
}

#[test]
fn ellipse_axes() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        &["ellipse"],
        &config("benchmark_ellipse.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 0);
    let e = &r.report["results"]["ellipses"];
    assert!((num(e, "/0/gamma_max") - 0.1059).abs() < 1e-4);
    assert!((num(e, "/1/delta0_axis") - 0.1490).abs() < 1e-4);
    assert!((num(e, "/1/delta1_axis") - 0.0149).abs() < 1e-4);
    assert!((num(e, "/2/delta0_axis") - 0.0670).abs() < 1e-4);
    assert!((num(e, "/2/delta1_axis") - 0.1339).abs() < 1e-4);

    let mut rd = csv::Reader::from_path(dir.path().join("ellipse.csv")).unwrap();
    let rows: Vec<Vec<f64>> = rd
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * 33);
    for r in &rows {
        let (c1, c0, g) = (r[0], r[1], r[2]);
        let q = (r[4] / (c0 * g)).powi(2) + (r[5] / (c1 * g)).powi(2);
        assert!((q - 1.0).abs() < 1e-12);
    }
}

#[test]
fn csv_exports_follow_the_format() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        &["certify"],
        &config("benchmark_norm_bound.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 0);
    let raw = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(raw.starts_with("omega,lambda_min_w,g_norm\r\n"));
    for line in raw.split("\r\n").skip(1).filter(|l| !l.is_empty()).take(50) {
        for cell in line.split(',') {
            let mantissa = cell
                .split('e')
                .next()
                .unwrap()
                .trim_start_matches('-')
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "{cell}");
            cell.parse::<f64>().unwrap();
        }
    }

    let r = run(
        &["spectrum"],
        &config("benchmark_norm_bound.json"),
        Some(dir.path()),
    );
    assert_eq!(r.code, 0);
    let roots = std::fs::read_to_string(dir.path().join("roots.csv")).unwrap();
    assert!(roots.starts_with("re,im\r\n"));
    let first: Vec<f64> = roots
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(first[0], num(&r.report, "/results/rightmost_real_part"));
}

#[test]
fn simulate_exports_functional_columns() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(
            &["construct"],
            &config("benchmark_norm_bound.json"),
            Some(dir.path())
        )
        .code,
        0
    );
    let cfg = write_config(
        dir.path(),
        "sim.json",
        &format!(
            r#"{{ {BENCH_SYSTEM}, "sector": {{ "kind": "norm_bound", "gamma": 0.1 }}, "functional": "functional.json",
                 "simulation": {{ "trajectories": 1, "t_end": 3, "nonlinearity": {{ "kind": "linear_gain", "norm": 0.05 }} }} }}"#
        ),
    );
    let out = dir.path().join("sim");
    assert_eq!(run(&["simulate"], &cfg, Some(&out)).code, 0);
    let mut rd = csv::Reader::from_path(out.join("trajectory_0.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["t", "x1", "x2", "V", "dV_fd"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 301);
    assert!(rows[0][4].is_empty() && rows[300][4].is_empty());
    let v: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn text_format_carries_the_json_numbers() {
    let j = run(&["bounds"], &config("benchmark_norm_bound.json"), None);
    let t = run(
        &["bounds", "--format", "text"],
        &config("benchmark_norm_bound.json"),
        None,
    );
    assert_eq!(t.code, 0);
    let v = j.report["results"]["value"].to_string();
    assert!(t.stdout.contains(&format!("results.value = {v}\n")));
}

#[test]
fn reports_validate_against_the_schema() {
    let schema: Value = serde_json::from_str(
        &std::fs::read_to_string(repo().join("docs/report.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("bounds", "benchmark_norm_bound.json"),
        ("certify", "benchmark_denied.json"),
        ("certify", "unstable.json"),
        ("bounds", "scalar_sector.json"),
        ("spectrum", "benchmark_norm_bound.json"),
        ("complete-type", "benchmark_norm_bound.json"),
        ("certify", "missing.json"),
    ];
    for (cmd, cfg) in cases {
        let r = run(&[cmd], &config(cfg), Some(dir.path()));
        let errors: Vec<String> = validator
            .iter_errors(&r.report)
            .map(|e| e.to_string())
            .collect();
        assert!(errors.is_empty(), "{cmd} {cfg}: {errors:?}");
        let on_disk: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert!(validator.is_valid(&on_disk));
    }
    let mut broken = run(&["bounds"], &config("benchmark_norm_bound.json"), None).report;
    broken["exit_code"] = 2.into();
    assert!(!validator.is_valid(&broken));
}
