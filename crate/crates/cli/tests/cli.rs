use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn til(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_til"))
        .args(args)
        .env("TIL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn negative_control_fixture_exits_with_one() {
    let o = til(&["verify", "--config", &fixture("negative_control.toml"), "--format", "md"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("| negative_control | F <= N/8 |"));
    assert!(out.contains("FAIL"));
}

#[test]
fn errors_exit_with_two() {
    let missing = til(&["verify", "--config", "/nonexistent/run.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("cannot read"));

    assert_eq!(til(&["verify"]).status.code(), Some(2));
    let unknown = til(&["verify", "--seed", "1", "--battery", "prop1,nonsense"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("nonsense"));
    assert_eq!(til(&["constants", "--seed", "1", "--battery", ","]).status.code(), Some(2));
    assert_eq!(til(&["verify", "--seed", "1", "--format", "xml"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nresolution = 2\n").unwrap();
    assert_eq!(til(&["verify", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&bad, "resolution = 64\n").unwrap();
    let no_seed = til(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(no_seed.status.code(), Some(2));
    assert!(stderr(&no_seed).contains("seed"));
}

#[test]
fn seed_flag_completes_a_seedless_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"battery": ["scalar"]}"#).unwrap();
    let o = til(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "5", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("statement_id,instance,"));
}

#[test]
fn manifests_are_byte_identical_across_runs() {
    // the output path is part of the manifest, so both runs use the same relative name
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = (d1.path().join("run.json"), d2.path().join("run.json"));
    for dir in [&d1, &d2] {
        let o = Command::new(env!("CARGO_BIN_EXE_til"))
            .args(["verify", "--seed", "3", "--battery", "prop1,bh,scalar", "--out", "run.json"])
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (x, y) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(x, y);
    let m: serde_json::Value = serde_json::from_slice(&x).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["failed"], 0);
    assert!(m["summary"].as_str().unwrap().starts_with("| statement | instance | margin | pass |"));
    let reports = m["reports"].as_array().unwrap();
    assert!(reports.iter().all(|r| r["pass"] == true));
    assert!(reports.iter().any(|r| r["statement_id"] == "bh"));

    let threaded = Command::new(env!("CARGO_BIN_EXE_til"))
        .args(["verify", "--seed", "3", "--battery", "prop1,bh,scalar", "--out", "run.json"])
        .current_dir(d1.path())
        .env("TIL_THREADS", "4")
        .status()
        .unwrap();
    assert!(threaded.success());
    assert_eq!(fs::read(&a).unwrap(), x);
}

#[test]
fn sweep_writes_manifests_and_a_stable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = til(&[
        "sweep", "eps", "0.1,0.03,0.01", "--seed", "2", "--battery", "linearization", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for v in ["0.1", "0.03", "0.01"] {
        assert!(out.join(format!("eps={v}.json")).is_file());
    }
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["value", "statement_id", "instance", "margin", "empirical_constant", "pass"]);
    // the schema and the non-numeric columns are pinned by the golden file
    let projected: String = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            format!("{},{},{},{}\n", &r[0], &r[1], &r[2], &r[5])
        })
        .collect();
    let expected = fs::read_to_string(golden("sweep_eps.txt")).unwrap();
    assert_eq!(format!("{}\n{projected}", header.join(",")), expected);

    for r in csv::Reader::from_reader(csv.as_bytes()).records() {
        let c: f64 = r.unwrap()[4].parse().unwrap();
        assert!(c.is_finite() && c > 0.0);
    }
}

#[test]
fn sweep_rejects_unknown_parameters() {
    let o = til(&["sweep", "temperature", "1,2", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown sweep parameter"));
    let o = til(&["sweep", "eps", "0.1,abc", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid sweep value"));
}

#[test]
fn translate_sweep_keeps_talagrand_deficits_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = til(&[
        "sweep", "v", "-0.5,0.25,0.5", "--config", &fixture("gaussian.toml"), "--battery", "talagrand", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("v=0.5.json")).unwrap()).unwrap();
    let translate = m["reports"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["instance"].as_str().unwrap().starts_with("translate"))
        .unwrap();
    assert!(translate["margin"].as_f64().unwrap().abs() <= 2e-3);
}

#[test]
fn constants_for_the_gaussian_and_the_default_battery() {
    let o = til(&["constants", "--config", &fixture("gaussian.toml"), "--battery", "spectral"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = t["constants"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    let ratio = rows[0]["value"].as_f64().unwrap();
    assert!((ratio - std::f64::consts::FRAC_PI_2).abs() < 0.05 * std::f64::consts::FRAC_PI_2, "{ratio}");

    let o = til(&["constants", "--config", &fixture("default.toml"), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let v: f64 = r[1].parse().unwrap();
        assert!(v.is_finite() && v > 0.0, "{r:?}");
    }
}

#[test]
fn default_fixture_passes() {
    let o = til(&["verify", "--config", &fixture("default.toml"), "--format", "md"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn list_names_every_statement() {
    let o = til(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("negative_control") && s.contains("legendre"));
}
