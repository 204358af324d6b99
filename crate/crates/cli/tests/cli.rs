use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dcs_core::pgm::{read_pgm16, ValueRange};
use dcs_core::{dten, Shape4, Tensor4};

fn dcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcs"))
        .args(args)
        .env_remove("DCS_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn geometry_suite_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcs(&["check", "--suite", "geometry", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let table = stdout(&o);
    assert!(table.contains("geometry/projection_composition"));
    assert!(!table.contains("FAIL"));
    let csv = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert!(csv.starts_with("suite,check,pass,metric,tolerance,detail"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn unknown_suite_is_usage_error() {
    let o = dcs(&["check", "--suite", "optics"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn conv_suite_contains_reductions() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcs(&["check", "--suite", "conv", "--seed", "42", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let table = stdout(&o);
    for name in ["conv/reduction_scale3", "conv/dilation_scale5"] {
        assert!(table.lines().any(|l| l.starts_with("PASS") && l.contains(name)), "{name}\n{table}");
    }
}

#[test]
fn sabotaged_gradient_fails_with_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcs(&["check", "--suite", "gradcheck", "--sabotage-grad", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let table = stdout(&o);
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("gradcheck/dcsconv_grads")), "{table}");
    let rows: Vec<&str> = table.lines().skip_while(|l| !l.starts_with("parameter_name,index")).collect();
    assert!(rows.len() >= 2, "{table}");
    assert!(rows[1].starts_with("weight,"), "{}", rows[1]);
    // the flipped element has relative error 2
    let rel: f64 = rows[1].split(',').nth(4).unwrap().parse().unwrap();
    assert!((rel - 2.0).abs() < 1e-6);
}

#[test]
fn demo_writes_levels_and_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = dcs(&["demo", "--out", arg(d.path()), "--size", "64x48", "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let names: Vec<String> = {
        let mut v: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        v.sort();
        v
    };
    assert_eq!(names.iter().filter(|n| n.starts_with("depth_l") && n.ends_with(".pgm")).count(), 5);
    assert_eq!(names.iter().filter(|n| n.starts_with("depth_l") && n.ends_with(".dten")).count(), 5);
    assert_eq!(names.iter().filter(|n| n.starts_with("scale_l") && n.ends_with(".pgm")).count(), 4);
    assert!(names.contains(&"summary.txt".to_string()));
    for n in &names {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n}");
    }
    for l in 0..5 {
        let t = dten::read_tensor(a.path().join(format!("depth_l{l}.dten"))).unwrap();
        assert_eq!(t.shape(), Shape4::new(1, 1, 48 >> l, 64 >> l));
        assert!(t.min() >= 0.1 && t.max() <= 100.0);
    }
}

#[test]
fn constant_prior_gives_mid_gray_scales() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcs(&["demo", "--out", arg(dir.path()), "--size", "32x32", "--prior", "constant"]);
    assert_eq!(o.status.code(), Some(0));
    for l in 0..4 {
        let pgm = read_pgm16(dir.path().join(format!("scale_l{l}.pgm"))).unwrap();
        assert!(pgm.samples.iter().all(|&s| s == 32768), "level {l}");
    }
}

#[test]
fn demo_rejects_bad_size_and_unwritable_dir() {
    let o = dcs(&["demo", "--size", "30x30", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = dcs(&["demo", "--size", "16x16", "--out", arg(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn convert_extremes_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let shape = Shape4::new(1, 1, 3, 4);
    dten::write_tensor(p("lo.dten"), &Tensor4::full(shape, -2.0)).unwrap();
    dten::write_tensor(p("hi.dten"), &Tensor4::full(shape, 6.0)).unwrap();
    for (src, want) in [("lo", 0u16), ("hi", 65535)] {
        let o = dcs(&["convert", arg(&p(&format!("{src}.dten"))), arg(&p(&format!("{src}.pgm"))), "--range=-2:6"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(read_pgm16(p(&format!("{src}.pgm"))).unwrap().samples.iter().all(|&s| s == want));
    }

    let ramp = Tensor4::from_fn(shape, |_, _, y, x| -2.0 + 8.0 * (y * 4 + x) as f64 / 11.0);
    dten::write_tensor(p("ramp.dten"), &ramp).unwrap();
    assert_eq!(dcs(&["convert", arg(&p("ramp.dten")), arg(&p("ramp.pgm")), "--range=-2:6"]).status.code(), Some(0));
    assert_eq!(dcs(&["convert", arg(&p("ramp.pgm")), arg(&p("back.dten"))]).status.code(), Some(0));
    let back = dten::read_tensor(p("back.dten")).unwrap();
    // f32 storage adds a relative 6e-8 on top of the quantization step
    let step = ValueRange::new(-2.0, 6.0).unwrap();
    let bound = (step.max - step.min) / 65535.0 + 1e-6;
    assert!(back.max_abs_diff(&ramp).unwrap() <= bound);
}

#[test]
fn convert_rejects_multichannel() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("rgb.dten");
    dten::write_tensor(&src, &Tensor4::zeros(Shape4::new(1, 3, 2, 2))).unwrap();
    let o = dcs(&["convert", arg(&src), arg(&dir.path().join("rgb.pgm"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("rgb.pgm").exists());
}

#[test]
fn convert_reports_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.dten");
    fs::write(&junk, b"not a tensor").unwrap();
    let o = dcs(&["convert", arg(&junk), arg(&dir.path().join("x.pgm"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("junk.dten"));
}

#[test]
fn bench_table_and_determinism_guard() {
    let o = dcs(&["--threads", "2", "bench", "--size", "32x32", "--iters", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 8, "{table}");
    for row in rows {
        let cols: Vec<&str> = row.split_whitespace().collect();
        let median: f64 = cols[3].parse().unwrap();
        assert!(median > 0.0, "{row}");
    }
    for op in ["conv", "dcsconv", "dmsf", "dcsf"] {
        assert!(table.lines().any(|l| l.starts_with(op)), "{op}");
    }

    let o = dcs(&["--threads", "2", "bench", "--op", "dcsconv", "--size", "16x16", "--iters", "1", "--sabotage-determinism"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn threads_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_dcs"))
        .args(["bench", "--op", "conv", "--size", "16x16", "--iters", "1"])
        .env("DCS_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.split_whitespace().nth(2) == Some("3")));
}
