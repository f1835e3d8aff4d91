use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sthawkes")).current_dir(dir).args(["--out", "out"]).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn write_events(dir: &Path) {
    let mut csv = String::from("event_date,latitude,longitude,event_type,country\n");
    let kinds = ["Battles", "Riots"];
    let countries = ["Kenya", "Uganda"];
    for month in 1..=12 {
        for k in 0..(month % 4 + 1) {
            let c = countries[(month + k) % 2];
            let t = kinds[k % 2];
            let (lat, lon) = if k % 2 == 0 { (0.5, 0.2) } else { (0.1, 9.6) };
            csv.push_str(&format!("2015-{month:02}-{:02},{lat},{lon},{t},{c}\n", k + 3));
        }
    }
    fs::write(dir.join("events.csv"), csv).unwrap();
    fs::write(dir.join("centroids.csv"), "region_id,cx,cy\nr0,0,0\nr1,10,0\nr2,60,60\n").unwrap();
}

#[test]
fn ingest_writes_one_grid_per_filter_combination() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_events(d);
    let args = ["ingest", "--events", "events.csv", "--centroids", "centroids.csv", "--country", "Kenya"];
    ok(d, &[&args[..], &["--country", "Uganda", "--event-type", "Battles", "--event-type", "Riots"]].concat());
    let summary = json(d.join("out/ingest.json"));
    let grids = summary["grids"].as_array().unwrap();
    assert_eq!(grids.len(), 4);
    let mut total = 0;
    for g in grids {
        let file = g["file"].as_str().unwrap();
        assert!(file.starts_with("grid__"), "{file}");
        assert!(d.join("out").join(file).exists());
        assert_eq!(g["months"], 12);
        total += g["total"].as_u64().unwrap();
    }
    assert_eq!(total, summary["events"].as_u64().unwrap());
}

#[test]
fn missing_input_exits_with_code_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ingest", "--events", "nowhere.csv", "--centroids", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
    let out = run(dir.path(), &["fit", "--grid", "absent.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"model": {"t_max": 3}, "bogus": 1}"#).unwrap();
    let out = run(dir.path(), &["--config", "cfg.json", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn config_file_values_are_used_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"simulate": {"months": 30, "lattice": [2, 2]}, "seed": 4}"#).unwrap();
    ok(d, &["--config", "cfg.json", "simulate", "--months", "20"]);
    let echo = json(d.join("out/grid_simulate.json"));
    assert_eq!(echo["months"], 20);
    assert_eq!(echo["seed"], 4);
    assert_eq!(rows(d.join("out/grid.csv")).len(), 20 * 4);
}

#[test]
fn mle_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "11", "simulate"]);
    ok(d, &["fit", "--grid", "out/grid.csv"]);
    let fit = json(d.join("out/mle_fit.json"));
    assert_eq!(fit["fit"]["converged"], true);
    assert!(fit["delta_bic"].as_f64().unwrap() < 0.0, "self-exciting data should prefer the full model");

    let warn = ok(d, &["predict", "--grid", "out/grid.csv", "--horizon", "3"]);
    assert!(warn.contains("warning"));
    assert_eq!(rows(d.join("out/predict_cell.csv")).len(), 3 * 20);
    assert_eq!(rows(d.join("out/predict_time.csv")).len(), 3);
    assert_eq!(rows(d.join("out/predict_space.csv")).len(), 20);

    ok(d, &["flags", "--grid", "out/grid.csv"]);
    let t = &json(d.join("out/flags_comparison.json"))["totals"];
    let sum: u64 = ["both", "hawkes_only", "naive_only", "neither"].iter().map(|k| t[k].as_u64().unwrap()).sum();
    assert_eq!(sum, t["months"].as_u64().unwrap());
    assert_eq!(rows(d.join("out/flags_comparison.csv")).len(), 60);
}

#[test]
fn short_bayes_run_needs_explicit_waiver() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--lattice", "2x2", "--months", "24"]);
    let refused = run(d, &["fit", "--grid", "out/grid.csv", "--mode", "bayes", "--draws", "10"]);
    assert_eq!(refused.status.code(), Some(2));
    ok(d, &["fit", "--grid", "out/grid.csv", "--mode", "bayes", "--draws", "10", "--allow-nonconverged"]);
    let diag = json(d.join("out/diagnostics.json"));
    assert!(diag["warning"].as_str().is_some_and(|w| !w.is_empty()));
    assert_eq!(rows(d.join("out/chains.csv")).len(), 4 * 10);
}

#[test]
fn map_marks_regions_without_events() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_events(d);
    ok(d, &["ingest", "--events", "events.csv", "--centroids", "centroids.csv", "--t-max", "2"]);
    ok(d, &["fit", "--grid", "out/grid.csv", "--t-max", "2", "--allow-nonconverged"]);
    ok(d, &["map", "--grid", "out/grid.csv"]);
    let map = rows(d.join("out/risk_map.csv"));
    assert_eq!(map.len(), 3);
    let no_data: Vec<&str> = map.iter().filter(|r| r[6] == "true").map(|r| r[0].as_str()).collect();
    assert_eq!(no_data, ["r2"]);

    ok(d, &["map", "--grid", "out/grid.csv", "--month", "2015-06"]);
    assert_eq!(json(d.join("out/map.json"))["selection"]["month_index"], 5);
    let outside = run(d, &["map", "--grid", "out/grid.csv", "--month", "2016-06"]);
    assert_eq!(outside.status.code(), Some(2));
    let outside = run(d, &["map", "--grid", "out/grid.csv", "--month-index", "12"]);
    assert_eq!(outside.status.code(), Some(2));
}

#[test]
fn simulate_continues_from_history() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--lattice", "3x1", "--months", "12", "--start", "2020-01"]);
    ok(d, &["simulate", "--grid", "out/grid.csv", "--months", "6", "--name", "next"]);
    let side = json(d.join("out/next.json"));
    assert_eq!(side["start_month"], "2021-01");
    assert_eq!(side["months"], 6);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "3", "simulate", "--lattice", "2x2", "--months", "30"]);
    let fit = ["--seed", "3", "fit", "--grid", "out/grid.csv", "--mode", "bayes", "--draws", "150"];
    ok(d, &fit);
    ok(d, &["--seed", "3", "predict", "--grid", "out/grid.csv", "--samples", "20"]);
    let first: Vec<_> = ["chains.csv", "summary.json", "ensemble.csv"].map(|f| fs::read(d.join("out").join(f)).unwrap()).into();
    ok(d, &fit);
    ok(d, &["--seed", "3", "predict", "--grid", "out/grid.csv", "--samples", "20"]);
    let second: Vec<_> = ["chains.csv", "summary.json", "ensemble.csv"].map(|f| fs::read(d.join("out").join(f)).unwrap()).into();
    assert_eq!(first, second);
}
