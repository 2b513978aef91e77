// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::path::Path;

use common::*;
use serde_json::Value;
use tempfile::tempdir;

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["heatmap", "--size", "8", "--out", o],
        vec!["heatmap", "--size", "27", "--out", o],
        vec!["scrub", "--seeds", "5..5", "--out", o],
        vec!["scrub", "--seeds", "9..3", "--out", o],
        vec!["steer", "--jobs", "0", "--out", o],
        vec!["steer", "--weights", "/nonexistent/w.gsw", "--out", o],
        vec!["heatmap", "--weights", "threshold", "--out", o],
        vec!["study", "--features", "planted", "--out", o],
        vec!["study", "--features", "no_such_feature", "--out", o],
        vec!["scrub", "--channels", "500", "--out", o],
        vec!["maze", "--size", "4"],
        vec!["render", "--size", "2", "--out", o],
    ];
    for args in cases {
        let (code, stderr) = exit_code(&args);
        assert_eq!(code, 2, "{args:?}: {stderr}");
        assert!(stderr.starts_with("error:"), "{args:?}: {stderr}");
    }
    assert!(!out.exists(), "failed runs must not create outputs");
    // Argument syntax errors come from the parser with the same code.
    assert_eq!(exit_code(&["heatmap", "--seeds", "ten", "--out", o]).0, 2);
}

#[test]
fn maze_json_validates_and_render_writes_observation() {
    let a = run_ok(&["maze", "--seed", "7", "--size", "15"]);
    let b = run_ok(&["maze", "--seed", "7", "--size", "15"]);
    assert_eq!(a.stdout, b.stdout);
    let m: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(violations("maze_state.schema.json", &m).is_empty());
    assert_eq!(m["inner_size"], 15);
    assert!(m["cheese"].is_array());
    let none: Value = serde_json::from_slice(&run_ok(&["maze", "--seed", "7", "--size", "15", "--cheese", "none"]).stdout).unwrap();
    assert!(none["cheese"].is_null());

    let dir = tempdir().unwrap();
    let png = dir.path().join("m.png");
    run_ok(&["render", "--seed", "7", "--size", "15", "--out", png.to_str().unwrap()]);
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&png).unwrap()));
    let reader = decoder.read_info().unwrap();
    assert_eq!((reader.info().width, reader.info().height), (64, 64));
}

#[test]
fn run_record_hashes_every_output() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("scrub");
    run_ok(&["scrub", "--seeds", "0..2", "--size", "5", "--out", out.to_str().unwrap()]);
    assert_valid("run_record.schema.json", &out.join("run.json"));
    let rec = read_json(&out.join("run.json"));
    assert_eq!(rec["command"], "scrub");
    let outputs = rec["outputs"].as_object().unwrap();
    let mut listed: Vec<&String> = outputs.keys().collect();
    listed.sort();
    let on_disk: Vec<String> = names(&out).into_iter().filter(|n| n != "run.json").collect();
    assert_eq!(listed, on_disk.iter().collect::<Vec<_>>());
    for (name, hash) in outputs {
        assert_eq!(hash.as_str().unwrap(), sha256_file(&out.join(name)), "{name}");
    }
    assert_eq!(rec["config"]["seeds"], "0..2");
    assert!(rec["config"].get("out").is_none() && rec["config"].get("jobs").is_none());
}

#[test]
fn empty_dataset_warns_and_succeeds() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("study");
    // Every maze gets top-right cheese, which the study filters out.
    run_ok(&[
        "study", "--weights", "threshold", "--seeds", "0..5", "--size", "9", "--placement", "top-right", "--out",
        out.to_str().unwrap(),
    ]);
    assert_valid("study_report.schema.json", &out.join("report.json"));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["rows"], 0);
    assert_eq!(r["filters"]["cheese_in_top_right"], 5);
    assert!(r["model"].is_null());
    assert!(!r["warnings"].as_array().unwrap().is_empty());
    let (header, rows) = csv_rows(&out.join("dataset.csv"));
    assert_eq!(header.len(), 13);
    assert!(rows.is_empty());
}

#[test]
fn study_dataset_matches_report() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("study");
    run_ok(&[
        "study", "--weights", "threshold", "--seeds", "0..40", "--size", "25", "--features", "planted", "--splits",
        "3", "--subsets", "2", "--out", out.to_str().unwrap(),
    ]);
    assert_valid("study_report.schema.json", &out.join("report.json"));
    let r = read_json(&out.join("report.json"));
    let (header, rows) = csv_rows(&out.join("dataset.csv"));
    assert_eq!(header[0], "seed");
    assert_eq!(header[12], "reached_cheese");
    assert_eq!(rows.len() as u64, r["rows"].as_u64().unwrap());
    let pos = rows.iter().filter(|row| row[12] == "1" || row[12] == "true").count();
    assert_eq!(pos as u64, r["positives"].as_u64().unwrap());
    assert_eq!(r["filters"]["kept"], r["rows"]);
    assert_eq!(r["subsets"].as_array().unwrap().len(), 2);
    assert_eq!(r["stability"]["splits"], 3);
}

#[test]
fn uniform_heatmap_is_a_fifth_everywhere() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("hm");
    run_ok(&[
        "heatmap", "--weights", "uniform", "--seeds", "0..2", "--size", "5", "--conditions", "Base,Effective", "--out",
        out.to_str().unwrap(),
    ]);
    assert_valid("heatmap_summary.schema.json", &out.join("summary.json"));
    for cond in ["Base", "Effective"] {
        let (header, rows) = csv_rows(&out.join(format!("heatmap_{cond}.csv")));
        assert_eq!(header, ["seed", "col", "row", "condition", "value"]);
        assert!(!rows.is_empty());
        for row in rows {
            let v: f64 = row[4].parse().unwrap();
            assert!((v - 0.2).abs() < 1e-12, "{row:?}");
            assert_eq!(row[3], cond);
        }
    }
    let s = read_json(&out.join("summary.json"));
    for c in s["conditions"].as_array().unwrap() {
        assert!((c["mean"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    }
    // Base against itself and the flat Effective map: every ratio is 1.
    for curve in s["ratio_curves"].as_array().unwrap() {
        for p in curve["points"].as_array().unwrap() {
            assert!((p["mean_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_seed_single_condition_writes_one_csv_one_png() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("hm");
    run_ok(&["heatmap", "--seeds", "3..4", "--size", "5", "--conditions", "Channel55", "--out", out.to_str().unwrap()]);
    assert_eq!(names(&out), ["heatmap_Channel55.csv", "heatmap_Channel55_seed3.png", "run.json", "summary.json"]);
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(out.join("heatmap_Channel55_seed3.png")).unwrap()));
    let reader = decoder.read_info().unwrap();
    assert_eq!((reader.info().width, reader.info().height), (200, 200));
    let s = read_json(&out.join("summary.json"));
    assert!(s["ratio_curves"].as_array().unwrap().is_empty());
}

#[test]
fn zero_strength_steering_changes_nothing() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("steer");
    run_ok(&["steer", "--seeds", "0..2", "--size", "7", "--alpha", "0", "--alpha-tr", "0", "--vector", "compose", "--out", out.to_str().unwrap()]);
    assert_valid("steer_summary.schema.json", &out.join("summary.json"));
    for seed in 0..2 {
        let f = |part: &str| out.join(format!("steer_seed{seed}_{part}.json"));
        assert_valid("vector_field.schema.json", &f("original"));
        assert_valid("field_diff.schema.json", &f("diff"));
        assert_eq!(std::fs::read(f("original")).unwrap(), std::fs::read(f("modified")).unwrap());
        let d = read_json(&f("diff"));
        assert_eq!(d["changed"], 0);
        assert_eq!(d["mean_tv"], 0.0);
    }
}

#[test]
fn cheese_steering_moves_probability_off_the_cheese_action() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("steer");
    run_ok(&["steer", "--seeds", "0..3", "--size", "7", "--vector", "cheese", "--out", out.to_str().unwrap()]);
    let s = read_json(&out.join("summary.json"));
    for row in s["rows"].as_array().unwrap() {
        if let (Some(a), Some(b)) = (row["cheese_action_original"].as_f64(), row["cheese_action_modified"].as_f64()) {
            assert!(b < a, "{row}");
        }
        assert!(row["changed"].as_u64().unwrap() > 0);
    }
}

fn field_probs_at(field: &Value, square: &Value) -> Vec<f64> {
    let e = field["entries"].as_array().unwrap().iter().find(|e| &e["square"] == square).expect("square in field");
    e["probs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect()
}

#[test]
fn decision_probs_agree_with_steering_fields() {
    let dir = tempdir().unwrap();
    let (dp, st) = (dir.path().join("dp"), dir.path().join("st"));
    run_ok(&["decision-probs", "--seeds", "0..4", "--size", "9", "--out", dp.to_str().unwrap()]);
    run_ok(&["steer", "--seeds", "0..4", "--size", "9", "--vector", "compose", "--out", st.to_str().unwrap()]);
    assert_valid("decision_report.schema.json", &dp.join("decision_probs.json"));
    let report = read_json(&dp.join("decision_probs.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len() + 4 * report["skipped"].as_array().unwrap().len(), 16);
    for row in rows {
        let seed = row["seed"].as_u64().unwrap();
        let part = match row["condition"].as_str().unwrap() {
            "original" => "original",
            "compose" => "modified",
            _ => continue,
        };
        let field = read_json(&st.join(format!("steer_seed{seed}_{part}.json")));
        let expect = field_probs_at(&field, &row["decision_square"]);
        let got: Vec<f64> = row["probs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
        assert_eq!(got, expect, "seed {seed} {part}");
        let idx = ["UP", "RIGHT", "DOWN", "LEFT", "NOOP"].iter().position(|a| row["cheese_action"] == *a).unwrap();
        assert_eq!(row["p_cheese_action"].as_f64().unwrap(), got[idx]);
    }
    let (header, csv) = csv_rows(&dp.join("decision_probs.csv"));
    assert_eq!(header.len(), 13);
    assert_eq!(csv.len(), rows.len());
}

#[test]
fn scrub_outputs_validate_and_agree() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("scrub");
    run_ok(&["scrub", "--seeds", "0..3", "--size", "7", "--channels", "effective", "--out", out.to_str().unwrap()]);
    assert_valid("scrub_output.schema.json", &out.join("scrub.json"));
    let s = read_json(&out.join("scrub.json"));
    assert_eq!(s["report"]["channels"], serde_json::json!([8, 55, 77, 82, 88, 89, 113]));
    let (_, rows) = csv_rows(&out.join("scrub.csv"));
    for (csv, json) in rows.iter().zip(s["report"]["rows"].as_array().unwrap()) {
        assert_eq!(csv[0], json["seed"].to_string());
        assert_eq!(csv[1].parse::<f64>().unwrap(), json["same_cheese"].as_f64().unwrap());
    }
}

fn run_in(dir: &Path, args: &[&str], cache: Option<&Path>, jobs: &str) -> Vec<(String, Vec<u8>)> {
    let mut c = bin();
    c.args(args).args(["--jobs", jobs, "--out", dir.to_str().unwrap()]);
    if let Some(cache) = cache {
        c.env("GOALSCOPE_CACHE", cache);
    }
    let out = c.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    snapshot(dir)
}

#[test]
fn vector_cache_round_trips() {
    let dir = tempdir().unwrap();
    let cache = dir.path().join("cache");
    let args = ["steer", "--seeds", "0..2", "--size", "7", "--vector", "compose"];
    let plain = run_in(&dir.path().join("a"), &args, None, "1");
    let cold = run_in(&dir.path().join("b"), &args, Some(&cache), "1");
    let entries = std::fs::read_dir(&cache).unwrap().count();
    assert_eq!(entries, 4, "one cheese and one top-right vector per seed");
    let warm = run_in(&dir.path().join("c"), &args, Some(&cache), "1");
    assert_eq!(plain, cold);
    assert_eq!(plain, warm);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), entries);
}

#[test]
fn output_does_not_depend_on_jobs() {
    let dir = tempdir().unwrap();
    let args = ["heatmap", "--seeds", "0..3", "--size", "5", "--conditions", "Base,CheeseMove"];
    let one = run_in(&dir.path().join("a"), &args, None, "1");
    let three = run_in(&dir.path().join("b"), &args, None, "3");
    assert_eq!(one, three);
}
