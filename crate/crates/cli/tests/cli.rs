use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn vibrancy(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibrancy"))
        .args(args)
        .current_dir(dir)
        .env("VIBRANCY_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_city(dir: &Path, seed: u64) -> PathBuf {
    let spec = dir.join("spec.toml");
    fs::write(&spec, format!("seed = {seed}\ngrid = 5\n[crime]\nextra = []\n")).unwrap();
    let city = dir.join("city");
    let o = vibrancy(dir, &["synth", "--out", "city", "--spec", "spec.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    city
}

fn run_all(city: &Path) {
    for stage in ["ingest", "metrics", "regress", "match", "report"] {
        let o = vibrancy(city, &[stage]);
        assert_eq!(code(&o), 0, "{stage}: {}", stderr(&o));
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synthetic_city_counts_survive_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 11);
    let o = vibrancy(&city, &["ingest"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let truth = json(&city.join("ground_truth.json"))["counts"].clone();
    let report = json(&city.join("out/ingest/ingest_report.json"));
    for key in ["block_groups", "blocks", "block_groups_included", "blocks_included", "listings", "businesses", "businesses_with_hours"] {
        assert_eq!(report[key], truth[key], "{key}");
    }
    let loaded: BTreeMap<String, u64> = report["datasets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| (d["dataset"].as_str().unwrap().to_string(), d["loaded"].as_u64().unwrap()))
        .collect();
    assert_eq!(loaded["crimes"], truth["crimes"].as_u64().unwrap());
    assert_eq!(loaded["lots"], truth["lots"].as_u64().unwrap());
    assert_eq!(loaded["properties"], truth["properties"].as_u64().unwrap());
}

#[test]
fn full_pipeline_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 12);
    run_all(&city);
    let first = snapshot(&city.join("out"));
    for stage in ["report", "match", "regress", "metrics", "ingest"] {
        assert!(first.keys().any(|p| p.starts_with(stage)), "{stage} wrote nothing");
    }
    fs::remove_dir_all(city.join("out")).unwrap();
    run_all(&city);
    assert_eq!(snapshot(&city.join("out")), first);

    let again = tmp.path().join("again");
    let o = vibrancy(tmp.path(), &["synth", "--out", "again", "--spec", "spec.toml"]);
    assert_eq!(code(&o), 0);
    for f in ["crimes.csv", "listings.jsonl", "lots.geojson", "ground_truth.json"] {
        assert_eq!(fs::read(city.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn match_tables_have_the_report_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 13);
    run_all(&city);
    for f in ["high_low_business.csv", "high_low_landuse.csv", "open_hours.csv"] {
        let text = fs::read_to_string(city.join("out/match").join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "study,measure,crime_type,window,n,mean_diff,t,p_raw,m,significant");
        assert!(text.lines().count() > 1, "{f} is empty");
    }
    let assoc = fs::read_to_string(city.join("out/regress/association_pop.csv")).unwrap();
    assert_eq!(assoc.lines().next().unwrap(), "predictor,outcome,r,t,n,flag");
    assert!(fs::read_to_string(city.join("out/report/summary.md")).unwrap().contains("## Matched pairs"));
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 14);
    fs::remove_file(city.join("crimes.csv")).unwrap();
    let o = vibrancy(&city, &["ingest"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("crimes.csv"), "{}", stderr(&o));
}

#[test]
fn empty_listings_give_no_businesses_and_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 15);
    fs::write(city.join("listings.jsonl"), "").unwrap();
    let o = vibrancy(&city, &["ingest"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("no businesses"), "{}", stderr(&o));
    assert_eq!(json(&city.join("out/ingest/ingest_report.json"))["businesses"], 0);
}

#[test]
fn too_many_skipped_records_fail_with_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 16);
    let mut crimes = fs::read_to_string(city.join("crimes.csv")).unwrap();
    let rows = crimes.lines().count();
    for k in 0..rows / 50 {
        crimes.push_str(&format!("bad{k},not a date,x,y,Thefts\n"));
    }
    fs::write(city.join("crimes.csv"), crimes).unwrap();
    let o = vibrancy(&city, &["ingest"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("crimes"), "{}", stderr(&o));
    let report = json(&city.join("out/ingest/ingest_report.json"));
    let crimes = report["datasets"].as_array().unwrap().iter().find(|d| d["dataset"] == "crimes").unwrap();
    assert_eq!(crimes["skipped"].as_array().unwrap().len(), rows / 50);
    assert!(!city.join("out/ingest/manifest.json").exists());

    let o = vibrancy(&city, &["ingest", "--set", "ingest.max_skip_fraction=0.05"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn downstream_stages_need_fresh_upstream_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 17);
    let o = vibrancy(&city, &["regress"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`ingest`"), "{}", stderr(&o));

    assert_eq!(code(&vibrancy(&city, &["ingest"])), 0);
    let o = vibrancy(&city, &["regress"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`metrics`"), "{}", stderr(&o));

    let o = vibrancy(&city, &["metrics", "--set", "dedup.max_distance_m=40"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("stale") && stderr(&o).contains("`ingest`"), "{}", stderr(&o));

    assert_eq!(code(&vibrancy(&city, &["metrics"])), 0);
    assert_eq!(code(&vibrancy(&city, &["regress"])), 0);
    let o = vibrancy(&city, &["report"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`match`"), "{}", stderr(&o));

    fs::write(city.join("out/metrics/unit_metrics.json"), "[]").unwrap();
    let o = vibrancy(&city, &["regress"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`metrics`"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let city = small_city(tmp.path(), 18);
    assert_eq!(code(&vibrancy(&city, &["frobnicate"])), 1);
    assert_eq!(code(&vibrancy(&city, &["ingest", "--set", "matching.radius_m=-5"])), 1);
    assert_eq!(code(&vibrancy(&city, &["ingest", "--set", "no_such_key=1"])), 1);
    assert_eq!(code(&vibrancy(&city, &["ingest", "--config", "absent.toml"])), 1);
    assert_eq!(code(&vibrancy(&city, &["--help"])), 0);
}

#[test]
fn underdetermined_model_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("tiny.toml"), "grid = 2\n[crime]\nextra = []\n").unwrap();
    let o = vibrancy(tmp.path(), &["synth", "--out", "tiny", "--spec", "tiny.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let city = tmp.path().join("tiny");
    assert_eq!(code(&vibrancy(&city, &["ingest"])), 0);
    assert_eq!(code(&vibrancy(&city, &["metrics"])), 0);
    let o = vibrancy(&city, &["regress"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn regress_recovers_planted_coefficients_within_two_standard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vibrancy(tmp.path(), &["synth", "--out", "city"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let city = tmp.path().join("city");
    for stage in ["ingest", "metrics", "regress"] {
        let o = vibrancy(&city, &[stage, "--set", "regress.specs=[\"pop+income+poverty\"]"]);
        assert_eq!(code(&o), 0, "{stage}: {}", stderr(&o));
    }
    let truth = json(&city.join("ground_truth.json"));
    let mut rdr = csv::Reader::from_path(city.join("out/regress/coefficients.csv")).unwrap();
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let outcome = if &rec[1] == "violent" { "violent" } else { "non_violent" };
        let want = truth[outcome][&rec[2]].as_f64().unwrap();
        let (got, se): (f64, f64) = (rec[3].parse().unwrap(), rec[4].parse().unwrap());
        assert!((got - want).abs() <= 2.0 * se, "{outcome} {}: {got} vs {want} (se {se})", &rec[2]);
        checked += 1;
    }
    assert_eq!(checked, 8);
}
