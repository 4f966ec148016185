use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stnlffm_core::synth::ClassMapMode;
use stnlffm_core::{evaluate, read_raster, write_raster, RasterGrid, SceneSpec};

fn stnlffm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stnlffm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, spec: &SceneSpec, dates: &str) -> PathBuf {
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    let out = dir.join("series");
    let o = stnlffm(&["synth", "--spec", s(&spec_path), "--dates", dates, "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn sweep_rows(csv: &Path) -> Vec<(f64, String, f64)> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn synth_fuse_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SceneSpec::linear(64, 64, 3, 2, ClassMapMode::Checkerboard, 0.004, 1);
    let series = synth(tmp.path(), &spec, "0,16,32");
    let pred = tmp.path().join("pred.f32");
    let o = stnlffm(&[
        "fuse",
        "--ref", s(&series.join("fine_0.f32")), s(&series.join("coarse_0.f32")),
        "--ref", s(&series.join("fine_32.f32")), s(&series.join("coarse_32.f32")),
        "--ref-date", "0", "--ref-date", "32",
        "--coarse", s(&series.join("coarse_16.f32")),
        "--pred-date", "16",
        "--out", s(&pred),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("pred.f32.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "fuse");
    assert_eq!(manifest["config"]["similarity"]["search_window"], 31);

    let json = tmp.path().join("eval.json");
    let o = stnlffm(&[
        "evaluate",
        "--predicted", s(&pred),
        "--observed", s(&series.join("truth_16.f32")),
        "--json", s(&json),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    for b in report["bands"].as_array().unwrap() {
        assert!(b["rmse"].as_f64().unwrap() < 0.005);
    }
}

#[test]
fn fuse_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = SceneSpec::linear(32, 32, 2, 3, ClassMapMode::VoronoiPatches, 0.003, 4);
    spec.noise_sigma = 0.01;
    let series = synth(tmp.path(), &spec, "0,8,16");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = stnlffm(&[
            "fuse",
            "--ref", s(&series.join("fine_0.f32")), s(&series.join("coarse_0.f32")),
            "--ref", s(&series.join("fine_16.f32")), s(&series.join("coarse_16.f32")),
            "--ref-date", "0", "--ref-date", "16",
            "--coarse", s(&series.join("coarse_8.f32")),
            "--pred-date", "8",
            "--window", "15",
            "--out", s(&out),
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.f32"), run("b.f32"));
}

#[test]
fn evaluate_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let p = RasterGrid::from_fn(8, 6, 2, |x, y, b| 0.1 + 0.01 * (x * y + b) as f32).unwrap();
    let o = RasterGrid::from_fn(8, 6, 2, |x, y, b| 0.1 + 0.011 * (x + y * b) as f32).unwrap();
    let (pp, op) = (tmp.path().join("p.f32"), tmp.path().join("o.f32"));
    write_raster(&p, &pp).unwrap();
    write_raster(&o, &op).unwrap();
    let out = stnlffm(&["evaluate", "--predicted", s(&pp), "--observed", s(&op)]);
    assert!(out.status.success());
    let expected = evaluate(&read_raster(&pp).unwrap(), &read_raster(&op).unwrap()).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected.to_csv());
}

#[test]
fn missing_input_exits_with_io_code() {
    let tmp = tempfile::tempdir().unwrap();
    let nope = tmp.path().join("nope.f32");
    let o = stnlffm(&["evaluate", "--predicted", s(&nope), "--observed", s(&nope)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.f32"));
}

#[test]
fn band_mismatch_exits_with_geometry_code() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.f32"), tmp.path().join("b.f32"));
    write_raster(&RasterGrid::filled(8, 8, 6, 0.2).unwrap(), &a).unwrap();
    write_raster(&RasterGrid::filled(8, 8, 4, 0.2).unwrap(), &b).unwrap();
    let out = tmp.path().join("out.f32");
    let o = stnlffm(&[
        "fuse", "--ref", s(&a), s(&a), "--coarse", s(&b), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!out.exists());
}

#[test]
fn bad_parameters_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.f32");
    write_raster(&RasterGrid::filled(8, 8, 1, 0.2).unwrap(), &a).unwrap();
    let out = s(&tmp.path().join("out.f32")).to_string();
    let even = stnlffm(&["fuse", "--ref", s(&a), s(&a), "--coarse", s(&a), "--out", &out, "--window", "8"]);
    assert_eq!(even.status.code(), Some(2));
    let mode = stnlffm(&["fuse", "--ref", s(&a), s(&a), "--coarse", s(&a), "--out", &out, "--mode", "fsdaf"]);
    assert_eq!(mode.status.code(), Some(2));
}

#[test]
fn five_date_sweep_gives_two_rows_per_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SceneSpec::linear(32, 32, 2, 3, ClassMapMode::Stripes, 0.002, 8);
    let series = synth(tmp.path(), &spec, "0,8,16,24,32");
    let csv = tmp.path().join("sweep.csv");
    let o = stnlffm(&["sweep", "--series", s(&series.join("series.json")), "--out", s(&csv), "--window", "15"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = sweep_rows(&csv);
    assert_eq!(rows.len(), 4);
    for mode in ["stnlffm", "starfm"] {
        let intervals: Vec<f64> = rows.iter().filter(|r| r.1 == mode).map(|r| r.0).collect();
        assert_eq!(intervals, vec![8.0, 16.0]);
    }
}

#[test]
fn stnlffm_beats_starfm_at_every_interval_on_heterogeneous_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let knots: Vec<f64> = (0..9).map(|i| i as f64 * 8.0).collect();
    let mut spec = SceneSpec::linear(64, 64, 3, 4, ClassMapMode::Checkerboard, 0.0, 3)
        .with_divergent_trajectories(&knots, 0.04);
    spec.feature_size = 4;
    spec.noise_sigma = 0.005;
    let series = synth(tmp.path(), &spec, "0,8,16,24,32,40,48,56,64");
    let csv = tmp.path().join("sweep.csv");
    let o = stnlffm(&["sweep", "--series", s(&series.join("series.json")), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = sweep_rows(&csv);
    let of = |mode: &str| -> Vec<(f64, f64)> {
        rows.iter().filter(|r| r.1 == mode).map(|r| (r.0, r.2)).collect()
    };
    let (a, b) = (of("stnlffm"), of("starfm"));
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        assert!(x.1 <= y.1, "interval {}: {} > {}", x.0, x.1, y.1);
    }
}
