//! End-to-end runs of the `ddbubble` binary: golden outputs, round trips
//! of every emitted file and the documented exit codes.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the expected outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddbubble::io::{read_csv_rows, read_json, BesselSummary, DefaultRow, IidSummary, KernelReportRow, LadderRow};
use ddbubble::kernels::BubbleVerdict;
use ddbubble::montecarlo::{DrawdownEstimate, PathBatch};
use ddbubble::volterra::Shape;
use ddbubble::{GridFunction, SolveReport};
use serde_json::Value;

const REL_TOL: f64 = 1e-9;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddbubble"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

fn json_close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => close(x.as_f64().unwrap(), y.as_f64().unwrap()),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_close(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w)))
        }
        _ => a == b,
    }
}

fn csv_close(a: &str, b: &str) -> bool {
    let (la, lb): (Vec<_>, Vec<_>) = (a.lines().collect(), b.lines().collect());
    la.len() == lb.len()
        && la.iter().zip(&lb).all(|(p, q)| {
            let (fp, fq): (Vec<_>, Vec<_>) = (p.split(',').collect(), q.split(',').collect());
            fp.len() == fq.len()
                && fp
                    .iter()
                    .zip(&fq)
                    .all(|(x, y)| match (x.parse::<f64>(), y.parse::<f64>()) {
                        (Ok(x), Ok(y)) => close(x, y),
                        _ => x == y,
                    })
        })
}

fn check_golden(case: &str) {
    let dir = golden_dir().join(case);
    let command = fs::read_to_string(dir.join("command")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let output = run_config(command.trim(), &dir.join("config.toml"), tmp.path(), &[]);
    assert!(
        output.status.success(),
        "{case}: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let expected_dir = dir.join("expected");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    if update {
        fs::create_dir_all(&expected_dir).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in &names {
        let got = fs::read_to_string(tmp.path().join(name)).unwrap();
        let golden = expected_dir.join(name);
        if update {
            fs::write(&golden, &got).unwrap();
            continue;
        }
        let want = fs::read_to_string(&golden).unwrap_or_else(|_| panic!("{case}: missing golden {name}"));
        let same = if name.ends_with(".json") {
            json_close(
                &serde_json::from_str(&got).unwrap(),
                &serde_json::from_str(&want).unwrap(),
            )
        } else {
            csv_close(&got, &want)
        };
        assert!(same, "{case}/{name} differs from the golden file");
    }
    if !update {
        let expected: usize = fs::read_dir(&expected_dir).unwrap().count();
        assert_eq!(expected, names.len(), "{case}: output file set changed");
    }
}

#[test]
fn golden_kernel_report() {
    check_golden("kernel_report");
}

#[test]
fn golden_solve_default() {
    check_golden("solve_default");
}

#[test]
fn golden_simulate() {
    check_golden("simulate");
}

#[test]
fn golden_iid_check() {
    check_golden("iid_check");
}

#[test]
fn golden_bessel() {
    check_golden("bessel");
}

#[test]
fn kernel_report_outputs_round_trip() {
    let dir = golden_dir().join("kernel_report").join("expected");
    let rows: Vec<KernelReportRow> = read_csv_rows(fs::File::open(dir.join("kernel_report.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 9);
    let verdict: BubbleVerdict = read_json(fs::File::open(dir.join("verdict.json")).unwrap()).unwrap();
    let back: Value = serde_json::to_value(&verdict).unwrap();
    let raw: Value = serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(back, raw);
}

#[test]
fn solve_default_outputs_round_trip() {
    let dir = golden_dir().join("solve_default").join("expected");
    let text = fs::read_to_string(dir.join("default.csv")).unwrap();
    let rows: Vec<DefaultRow> = read_csv_rows(text.as_bytes()).unwrap();
    let m = GridFunction::read_csv(text.as_bytes(), Shape::RatioLinear).unwrap();
    assert_eq!(m.len(), rows.len());
    for row in &rows {
        assert!(close(row.ratio, row.m / row.x));
    }
    let report: SolveReport = read_json(fs::File::open(dir.join("solve_report.json")).unwrap()).unwrap();
    assert!(report.converged);
}

#[test]
fn simulate_outputs_round_trip() {
    let dir = golden_dir().join("simulate").join("expected");
    let estimates: Vec<DrawdownEstimate> = read_json(fs::File::open(dir.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(estimates.len(), 4);
    // Every path of the absorbing example ends its first drawdown at 1/2.
    assert_eq!(estimates[0].value, 0.5);
    let ladder: Vec<LadderRow> = read_csv_rows(fs::File::open(dir.join("ladder.csv")).unwrap()).unwrap();
    assert!(!ladder.is_empty());
    let batch = PathBatch::read_csv(fs::File::open(dir.join("paths.csv")).unwrap(), 1, "kernel").unwrap();
    assert_eq!(batch.len(), 20);
    assert_eq!(batch.horizon, 8);
}

#[test]
fn iid_and_bessel_outputs_round_trip() {
    let dir = golden_dir();
    let iid: IidSummary = read_json(fs::File::open(dir.join("iid_check/expected/iid_verdict.json")).unwrap()).unwrap();
    assert_eq!(iid.survival_start, 2);
    let ladder: Vec<LadderRow> =
        read_csv_rows(fs::File::open(dir.join("iid_check/expected/ladder.csv")).unwrap()).unwrap();
    assert!(ladder.iter().all(|r| r.reference.is_some()));
    let bessel: BesselSummary =
        read_json(fs::File::open(dir.join("bessel/expected/bessel_report.json")).unwrap()).unwrap();
    assert_eq!(bessel.drivers.len(), 1);
    assert!(bessel.ks.is_some());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = golden_dir().join("simulate");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for out in [a.path(), b.path()] {
        let output = run_config(
            "simulate",
            &dir.join("config.toml"),
            out,
            &["--seed", "99", "--paths", "300"],
        );
        assert!(output.status.success());
    }
    for name in ["estimates.json", "ladder.csv", "paths.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn format_flag_limits_outputs() {
    let dir = golden_dir().join("kernel_report");
    let tmp = tempfile::tempdir().unwrap();
    let output = run_config(
        "kernel-report",
        &dir.join("config.toml"),
        tmp.path(),
        &["--format", "json"],
    );
    assert!(output.status.success());
    assert!(tmp.path().join("verdict.json").exists());
    assert!(!tmp.path().join("kernel_report.csv").exists());
}

#[test]
fn unknown_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[kernel]\nfamily = \"affine-drop\"\n\n[grid]\nnodez = 4\n");
    let output = run_config("kernel-report", &config, tmp.path(), &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("kernel-report"), "{stderr}");
    assert!(stderr.contains("line 5"), "{stderr}");
    assert!(stderr.contains("nodez"), "{stderr}");
}

#[test]
fn empty_grid_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[kernel]\nfamily = \"affine-drop\"\n\n[grid]\nnodes = 0\n");
    let output = run_config("kernel-report", &config, tmp.path(), &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_section_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[kernel]\nfamily = \"affine-drop\"\n");
    let output = run_config("bessel", &config, tmp.path(), &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn max_iter_exhaustion_exits_with_code_three() {
    let dir = golden_dir().join("solve_default");
    let tmp = tempfile::tempdir().unwrap();
    let output = run_config(
        "solve-default",
        &dir.join("config.toml"),
        tmp.path(),
        &["--max-iter", "2"],
    );
    assert_eq!(output.status.code(), Some(3));
    let report: SolveReport = read_json(fs::File::open(tmp.path().join("solve_report.json")).unwrap()).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 2);
}

#[test]
fn false_contraction_bounds_exit_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nfamily = \"exponential-ratio\"\n\n[grid]\nnodes = 40\n\n[solve]\nmethod = \"contraction\"\nbounds = { alpha = 0.9, beta = 0.1 }\n",
    );
    let output = run_config("solve-default", &config, tmp.path(), &[]);
    assert_eq!(
        output.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn false_certificate_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nfamily = \"binomial-half\"\n\n[classify]\ncertificates = [{ from = 1.0, claim = { type = \"power-decay\", scale = 1e-3, exponent = 1.0 } }]\n",
    );
    let output = run_config("kernel-report", &config, tmp.path(), &[]);
    assert_eq!(
        output.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn tabulated_kernel_report_passes_through() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("k.csv"),
        "x,y,k\n1,1,0.2\n1,2,0.2\n4,4,0.05\n4,8,0.05\n",
    )
    .unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nfamily = \"tabulated\"\ntable = \"k.csv\"\n\n[grid]\nlo = 1.0\nhi = 4.0\nnodes = 3\n",
    );
    let output = run_config("kernel-report", &config, tmp.path(), &[]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let rows: Vec<KernelReportRow> =
        read_csv_rows(fs::File::open(tmp.path().join("kernel_report.csv")).unwrap()).unwrap();
    // Mass 0.2 on or above the diagonal at x = 1, so a(1) = 0.8.
    assert!((rows[0].a - 0.8).abs() < 1e-9, "{rows:?}");
}
