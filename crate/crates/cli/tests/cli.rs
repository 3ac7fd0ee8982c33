//! End-to-end runs of the `fedp` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen_file(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).to_string_lossy().into_owned();
    let mut full = vec!["gen", "-o", &path];
    full.extend_from_slice(args);
    let o = fedp(&full);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

#[test]
fn gen_then_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_file(dir.path(), "v.txt", &["--format", "int8", "--n", "8", "--count", "500", "--seed", "4", "--class", "uniform", "--class", "boundary"]);
    let o = fedp(&["run", &path]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("records: 500  passed: 500  failed: 0"), "{out}");
    assert!(out.contains("bit-exact: 1.000000"), "{out}");
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--format", "bf8", "--count", "64", "--seed", "99", "--class", "spread", "--class", "special"];
    let a = gen_file(dir.path(), "a.txt", &args);
    let b = gen_file(dir.path(), "b.txt", &args);
    assert_eq!(fs::read_to_string(a).unwrap(), fs::read_to_string(b).unwrap());
}

#[test]
fn violation_exits_nonzero_with_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_file(dir.path(), "v.txt", &["--format", "fp16", "--count", "3", "--seed", "1"]);
    // corrupt the expectation of the second record
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let rec = &mut lines[2];
    let pos = rec.find("expect=").unwrap() + "expect=".len();
    let flipped = u32::from_str_radix(&rec[pos..pos + 8], 16).unwrap() ^ 0x0010_0000;
    rec.replace_range(pos..pos + 8, &format!("{flipped:08x}"));
    fs::write(&path, lines.join("\n")).unwrap();

    let report = dir.path().join("r.csv");
    let o = fedp(&["run", &path, "--trace", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL line 3"), "{out}");
    assert!(out.contains("\"stage1\""), "trace missing: {out}");
    assert!(out.contains("failed: 1"), "{out}");
    let csv = fs::read_to_string(report).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().any(|l| l.starts_with("3,") && l.ends_with(",false")), "{csv}");
}

#[test]
fn malformed_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "{\"format\":\"int8\",\"n\":4}\n# comment\na=00000000 b=00000000 c=00000000 expect=0000\n").unwrap();
    let o = fedp(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn empty_file_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.txt");
    fs::write(&path, "").unwrap();
    let o = fedp(&["run", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("records: 0"));
}

#[test]
fn special_class_rejected_for_integers() {
    let o = fedp(&["gen", "--format", "uint4", "--class", "special"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("special"), "{}", stderr(&o));
}

#[test]
fn unsupported_width_rejected() {
    let o = fedp(&["gen", "--format", "fp16", "--n", "6"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn perf_reference_point() {
    let o = fedp(&["perf", "--reference-point"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("2.4528 GFLOPS") && out.contains("9.8112 GFLOPS"), "{out}");

    let o = fedp(&["perf", "--latency", "13"]);
    assert!(stdout(&o).contains("0.7547 GFLOPS"), "{}", stdout(&o));

    let o = fedp(&["perf", "--latency", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn perf_table_csv() {
    let o = fedp(&["perf", "--table", "--csv", "--ns", "4,8"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 7);
    assert!(out.lines().nth(1).unwrap().starts_with("fedp,4,4,306600000,32,2.4528,9.8112"), "{out}");
}
