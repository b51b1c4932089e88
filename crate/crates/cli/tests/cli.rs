use std::path::PathBuf;
use std::process::{Command, Output};

use cancelcheck_core::dsl::{parse_system, SourceText};
use serde_json::Value;

fn systems(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "systems", name].iter().collect()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cancelcheck"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_json_reports_are_stable_and_complete() {
    let path = systems("div_curl.sys");
    let a = run(&["check", path.to_str().unwrap(), "--json"]);
    let b = run(&["check", path.to_str().unwrap(), "--json"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["settings"]["moment_tol"], 1e-8);
    assert_eq!(v["settings"]["quadrature"]["tol"], 1e-8);
    assert_eq!(v["settings"]["ellipticity"]["seed"], 0);
    let r = &v["result"];
    assert_eq!(r["CC"]["holds"], true);
    assert_eq!(r["canceling"], false);
    assert_eq!(r["cocanceling"], false);
    assert_eq!(r["K_C_basis"], serde_json::json!([["0", "0", "0", "1"]]));
}

#[test]
fn check_text_and_seed_flag() {
    let path = systems("laplace_div_3d.sys");
    let o = run(&["check", path.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("# cancelcheck"));
    assert!(s.contains("seed 7"));
    assert!(s.contains("cocanceling: yes"));
    assert!(s.contains("CC: holds"));
}

#[test]
fn non_elliptic_example_is_reported() {
    let path = systems("r4_example.sys");
    let o = run(&["check", path.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["elliptic"]["verdict"], "No");
    assert_eq!(v["result"]["elliptic"]["xi"], serde_json::json!(["0", "0", "1", "0"]));
    assert_eq!(v["result"]["diagnostics"][0]["code"], "NON_ELLIPTIC");
    let o = run(&["annihilator", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("(0, 0, 1, 0)"));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "bad.sys", "dim 2\noperator A {\n  from 1 to 1\n  rows: d1 u1 + d2^2 u1\n}\n");
    let o = run(&["check", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    let o = run(&["check", dir.path().join("missing.sys").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inconclusive_ellipticity_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "cone.sys", "dim 3\noperator A {\n  from 1 to 1\n  rows: (d1^2 - 2 d2^2 + 3 d3^2) u1\n}\n");
    let o = run(&["check", p.to_str().unwrap(), "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("Inconclusive"));
}

#[test]
fn annihilator_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.sys");
    let o = run(&["annihilator", systems("gradient_2d.sys").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let sys = parse_system(&SourceText::from_file(&out).unwrap()).unwrap();
    assert_eq!(sys.a.symbol().get(0, 0).to_string(), "d2^2");
    assert_eq!(sys.a.symbol().get(0, 1).to_string(), "-d1 d2");

    let o = run(&["annihilator", systems("laplace_2d.sys").to_str().unwrap()]);
    assert!(stdout(&o).contains("not canceling: annihilator trivial"));
}

#[test]
fn moment_of_the_laplacian() {
    let o = run(&["moment", systems("laplace_2d.sys").to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["result"]["rows"].as_array().unwrap();
    let m00 = rows[0]["values"][0].as_f64().unwrap();
    assert!((m00 - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    let o = run(&["moment", systems("div_curl.sys").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("below the space dimension"));
}

#[test]
fn homogenize_splits_lower_order_terms() {
    let dir = tempfile::tempdir().unwrap();
    let text = "dim 2\noperator A {\n  from 1 to 2\n  rows: d1 u1; d2 u1\n}\nconstraint C {\n  from 2 to 2\n  rows: d1 f1; f2\n}\n";
    let p = write_temp(&dir, "inh.sys", text);
    let o = run(&["homogenize", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let body = stdout(&o);
    let sys = parse_system(&SourceText::inline(body)).unwrap();
    let c = sys.c.unwrap();
    assert!(c.rows_are_homogeneous());
    assert_eq!(c.order(), Some(1));
    assert_eq!(c.target_dim(), 3);
}

#[test]
fn witness_csv_and_json() {
    let path = systems("laplace_2d.sys");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let args = ["witness", path.to_str().unwrap(), "--direction", "1,0", "--grid", "64", "--eps", "0.8,0.4,0.2"];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    let o = run(&with_out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "epsilon,ratio,residual");
    assert_eq!(data.len(), 4);
    assert!(csv.contains("# classification: GROWING"));

    let mut json_args = args.to_vec();
    json_args.push("--json");
    let a = run(&json_args);
    let b = run(&json_args);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["result"]["classification"], "GROWING");
    assert_eq!(v["settings"]["j"], "inf");
    assert_eq!(v["settings"]["seed"], 0);
    assert!(v["result"]["fit"]["slope"].as_f64().unwrap() > 0.0);
}

#[test]
fn witness_outside_the_range_is_indeterminate() {
    let path = systems("div_curl.sys");
    let base = ["witness", path.to_str().unwrap(), "--direction", "0,0,0,1", "--grid", "16", "--eps", "1.2,0.8", "--j", "1"];
    let o = run(&base);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("RESIDUAL_TOO_LARGE"));
    let mut strict = base.to_vec();
    strict.push("--strict");
    let o = run(&strict);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("residual"));
}

#[test]
fn witness_rejects_bad_configurations() {
    let path = systems("laplace_2d.sys");
    let p = path.to_str().unwrap();
    for extra in [["--grid", "100"], ["--eps", "0.01"], ["--j", "2"], ["--family", "other"]] {
        let mut args = vec!["witness", p, "--direction", "1,0"];
        args.extend(extra);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{extra:?}");
    }
    let o = run(&["witness", p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("direction"));
}
