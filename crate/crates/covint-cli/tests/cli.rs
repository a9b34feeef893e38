//! End-to-end runs of the `covint` binary against the shipped configs.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::{Command, Output};

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn covint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covint"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn parse_record(path: &std::path::Path) -> HashMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn kestelman_cov_verifies() {
    let out = tempdir_file("kest.out");
    let cfg = example("kestelman1d.cfg");
    let r = covint(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "cov",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("Verified"), "{stdout}");

    let record = parse_record(&out);
    // the record echoes the resolved config and brackets 2/3 on both sides
    assert_eq!(record["config.map.g1"], "x1*x1");
    assert_eq!(record["config.options.seed"], "42");
    assert_eq!(record["result.verdict"], "Verified");
    let lo: f64 = record["result.lhs.lower"].parse().unwrap();
    let hi: f64 = record["result.lhs.upper"].parse().unwrap();
    assert!(lo <= 2.0 / 3.0 && 2.0 / 3.0 <= hi);
    let lo: f64 = record["result.rhs.lower"].parse().unwrap();
    let hi: f64 = record["result.rhs.upper"].parse().unwrap();
    assert!(lo <= 2.0 / 3.0 && 2.0 / 3.0 <= hi);
}

#[test]
fn counterexample_is_violated_with_witnesses() {
    let out = tempdir_file("counter.out");
    let cfg = example("counterexample.cfg");
    // a shallower schedule keeps the test quick; the violation is coarse
    let r = covint(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--depth",
        "6",
        "cov",
    ]);
    assert_eq!(
        r.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    let record = parse_record(&out);
    assert_eq!(record["result.verdict"], "Violated");
    let witnesses: usize = record["result.injectivity_witnesses"].parse().unwrap();
    assert!(witnesses >= 1);
    let ratio: f64 = record["result.ratio"].parse().unwrap();
    assert!(ratio > 1.7 && ratio < 2.3, "ratio {ratio}");
}

#[test]
fn polar_cov_verifies_at_reduced_depth() {
    let out = tempdir_file("polar.out");
    let cfg = example("polar.cfg");
    let r = covint(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--depth",
        "7",
        "cov",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    let record = parse_record(&out);
    assert_eq!(record["result.verdict"], "Verified");
    let lo: f64 = record["result.lhs.lower"].parse().unwrap();
    let hi: f64 = record["result.lhs.upper"].parse().unwrap();
    assert!(lo <= std::f64::consts::PI && std::f64::consts::PI <= hi);
    assert_eq!(record["result.injectivity_witnesses"], "0");
}

#[test]
fn integrate_reports_unconverged_brackets_with_exit_two() {
    // sqrt has unbounded slope at 0: the bracket encloses 2/3 but cannot
    // reach the default 1e-6 tolerance at depth 12
    let cfg = example("kestelman1d.cfg");
    let out = tempdir_file("sqrt.out");
    let r = covint(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "integrate",
    ]);
    assert_eq!(r.status.code(), Some(2));
    let record = parse_record(&out);
    let lo: f64 = record["result.bracket.lower"].parse().unwrap();
    let hi: f64 = record["result.bracket.upper"].parse().unwrap();
    assert!(lo <= 2.0 / 3.0 && 2.0 / 3.0 <= hi);
    assert_eq!(record["result.converged"], "false");
}

#[test]
fn runs_are_deterministic_for_a_fixed_seed() {
    let out1 = tempdir_file("det1.out");
    let out2 = tempdir_file("det2.out");
    let cfg = example("kestelman1d.cfg");
    for out in [&out1, &out2] {
        let r = covint(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "cov",
        ]);
        assert_eq!(r.status.code(), Some(0));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "records differ between identical runs");
}

#[test]
fn integrate_and_content_on_a_box() {
    let cfg = tempdir_file("unit.cfg");
    std::fs::write(
        &cfg,
        r#"
[problem]
dimension = 2
[domain]
kind = box
lo = 0, 0
hi = 1, 1
[integrand]
f = "1"
[options]
depths = 1, 2
"#,
    )
    .unwrap();
    let r = covint(&["--config", cfg.to_str().unwrap(), "integrate"]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("[1, 1]"), "{stdout}");

    let r = covint(&["--config", cfg.to_str().unwrap(), "content"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("[1, 1]"));
}

#[test]
fn content_of_classified_sets() {
    // unit disk via expression classifier brackets pi
    let cfg = tempdir_file("disk.cfg");
    std::fs::write(
        &cfg,
        "[problem]\ndimension = 2\n[domain]\nkind = classified\nlo = -1, -1\nhi = 1, 1\ninside = \"x1*x1 + x2*x2 - 1\"\n[options]\ndepths = 4, 8\n",
    )
    .unwrap();
    let out = tempdir_file("disk.out");
    let r = covint(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "content",
    ]);
    assert_eq!(r.status.code(), Some(0));
    let record = parse_record(&out);
    let inner: f64 = record["result.content.inner"].parse().unwrap();
    let outer: f64 = record["result.content.outer"].parse().unwrap();
    assert!(inner <= std::f64::consts::PI && std::f64::consts::PI <= outer);

    // classifier that is Outside everywhere gives the empty bracket
    let cfg = tempdir_file("empty.cfg");
    std::fs::write(
        &cfg,
        "[problem]\ndimension = 2\n[domain]\nkind = classified\nlo = 0, 0\nhi = 1, 1\ninside = \"1\"\n[options]\ndepths = 3\n",
    )
    .unwrap();
    let r = covint(&["--config", cfg.to_str().unwrap(), "content"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("[0, 0]"));
}

#[test]
fn config_errors_exit_one_with_location() {
    let cfg = tempdir_file("bad.cfg");
    std::fs::write(
        &cfg,
        "[problem]\ndimension = 2\n[domain]\nkind = box\nlo = 0, 0\nhi = 1, 1\n[integrand]\nf = \"x3\"\n",
    )
    .unwrap();
    let r = covint(&["--config", cfg.to_str().unwrap(), "integrate"]);
    assert_eq!(r.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("line 8"), "{stderr}");
    assert!(stderr.contains("dimension"), "{stderr}");

    let r = covint(&["integrate"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn cousin_gauge_failure_exits_two() {
    let cfg = tempdir_file("cousin.cfg");
    std::fs::write(
        &cfg,
        "[problem]\ndimension = 1\n[domain]\nkind = box\nlo = 0\nhi = 1\n[gauge]\ndelta = \"abs(x1-0.3)\"\n[options]\nmax_depth = 10\n",
    )
    .unwrap();
    let r = covint(&["--config", cfg.to_str().unwrap(), "cousin"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stdout).contains("witness"));

    // a workable gauge verifies
    let good = tempdir_file("cousin_good.cfg");
    std::fs::write(
        &good,
        "[problem]\ndimension = 1\n[domain]\nkind = box\nlo = 0\nhi = 1\n[gauge]\ndelta = \"0.3\"\n",
    )
    .unwrap();
    let r = covint(&["--config", good.to_str().unwrap(), "cousin"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("verified"));
}

#[test]
fn sard_reports_decreasing_contents() {
    let out = tempdir_file("sard.out");
    let cfg = example("sard.cfg");
    let r = covint(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "sard",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let record = parse_record(&out);
    let v0: f64 = record["result.content.0.value"].parse().unwrap();
    let v3: f64 = record["result.content.3.value"].parse().unwrap();
    assert!(v3 < v0, "{v3} vs {v0}");
    assert!(v3 <= 0.1);
}

fn tempdir_file(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("covint-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}
