use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const OHMIC: &str = r#"{"type":"ohmic_exp","s":1.0,"alpha":0.2,"omega_c":10.0,"beta":1.0}"#;
const SUBOHMIC: &str = r#"{"type":"ohmic_exp","s":0.5,"alpha":1.0,"omega_c":10.0,"beta":10.0}"#;

fn bcfbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcfbench"))
        .args(args)
        .current_dir(dir)
        .env_remove("BCFBENCH_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ohmic.json"), OHMIC).unwrap();
    std::fs::write(dir.path().join("subohmic.json"), SUBOHMIC).unwrap();
    dir
}

#[test]
fn fit_records_delta_l() {
    let dir = setup();
    let o = bcfbench(dir.path(), &["fit", "--method", "esprit", "--K", "6", "--bath", "ohmic.json", "--out", "m.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(&dir.path().join("m.json"));
    assert_eq!(m["meta"]["K"], 6);
    assert_eq!(m["meta"]["t_f"], 30.0);
    let dl = m["meta"]["deltaL"].as_f64().unwrap();
    assert!(dl > 0.0 && dl < 1e-3, "deltaL = {dl}");
    assert_eq!(m["terms"].as_array().unwrap().len(), 6);
    assert!(m["meta"]["config"]["bath"].is_object());
}

#[test]
fn missing_bath_file_is_a_config_error() {
    let dir = setup();
    let o = bcfbench(dir.path(), &["fit", "--method", "esprit", "--K", "4", "--bath", "missing.json", "--out", "m.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn invalid_bath_is_a_config_error() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.json"), r#"{"type":"ohmic_exp","s":-1,"alpha":0.2,"omega_c":10,"beta":1}"#).unwrap();
    let o = bcfbench(dir.path(), &["fit", "--method", "esprit", "--K", "4", "--bath", "bad.json", "--out", "m.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.json"));
}

#[test]
fn ip_convert_writes_a_model() {
    let dir = setup();
    std::fs::write(dir.path().join("ip.json"), r#"{"omega_matrix":[[2.0]],"kappa":[0.5],"g":[1.0]}"#).unwrap();
    let o = bcfbench(dir.path(), &["fit", "--method", "ip-convert", "--ip", "ip.json", "--out", "m.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(&dir.path().join("m.json"));
    let terms = m["terms"].as_array().unwrap();
    let t = terms.iter().find(|t| t["d"][0].as_f64().unwrap().abs() > 0.5).unwrap();
    assert!((t["z"][0].as_f64().unwrap() - 0.25).abs() < 1e-14);
    assert!((t["z"][1].as_f64().unwrap() - 2.0).abs() < 1e-14);
    assert!(m["meta"]["deltaL"].is_null());
}

#[test]
fn benchmark_is_deterministic() {
    let dir = setup();
    let args = ["benchmark", "--bath", "ohmic.json", "--omega0", "1", "--v0", "1", "--omegas=-1:1:0.5"];
    let mut a = args.to_vec();
    a.extend(["--out", "a"]);
    let mut b = args.to_vec();
    b.extend(["--out", "b"]);
    assert_eq!(code(&bcfbench(dir.path(), &a)), 0);
    assert_eq!(code(&bcfbench(dir.path(), &b)), 0);
    for f in ["benchmark.json", "spectra.csv"] {
        let x = std::fs::read_to_string(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read_to_string(dir.path().join("b").join(f)).unwrap();
        // only the output directory differs between the two configs
        assert_eq!(x.replace("\"a\"", "\"b\""), y, "{f}");
    }
    let j = read_json(&dir.path().join("a/benchmark.json"));
    assert!(j["q2_eq"].as_f64().unwrap() > 0.0 && j["p2_eq"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(dir.path().join("a/spectra.csv")).unwrap();
    assert!(csv.starts_with("# bcfbench"));
    assert!(csv.contains("# units:"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 6);
}

#[test]
fn benchmark_without_grid_writes_moments_only() {
    let dir = setup();
    let o = bcfbench(dir.path(), &["benchmark", "--bath", "ohmic.json", "--omega0", "1", "--v0", "1", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("o/benchmark.json").exists());
    assert!(!dir.path().join("o/spectra.csv").exists());
}

#[test]
fn subohmic_pole_is_flagged() {
    let dir = setup();
    let args = ["benchmark", "--bath", "subohmic.json", "--omega0", "1", "--v0", "1", "--omegas", "0,0.5", "--out", "o"];
    let o = bcfbench(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("o/spectra.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[1], "0e0,,,pole");
    assert!(rows[2].ends_with(','));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&bcfbench(dir.path(), &strict)), 1);
}

#[test]
fn single_model_test_gives_one_row() {
    let dir = setup();
    assert_eq!(code(&bcfbench(dir.path(), &["system", "two-spin", "--out", "spin.json"])), 0);
    let fit = ["fit", "--method", "esprit", "--K", "6", "--bath", "ohmic.json", "--out", "m.json"];
    assert_eq!(code(&bcfbench(dir.path(), &fit)), 0);
    let o = bcfbench(
        dir.path(),
        &["test", "--system", "spin.json", "--bath", "ohmic.json", "--model", "m.json", "--out", "t"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = read_json(&dir.path().join("t/surrogate.json"));
    assert_eq!(j["kind"], "surrogate");
    assert_eq!(j["rows"].as_array().unwrap().len(), 1);
    assert_eq!(j["transitions"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("t/surrogate.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn test_needs_exactly_one_model_source() {
    let dir = setup();
    assert_eq!(code(&bcfbench(dir.path(), &["system", "two-spin", "--out", "spin.json"])), 0);
    let o = bcfbench(dir.path(), &["test", "--system", "spin.json", "--bath", "ohmic.json", "--out", "t"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_report_joins_by_k() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(code(&bcfbench(p, &["system", "two-spin", "--out", "spin.json"])), 0);
    for k in ["2", "4"] {
        let out = format!("models/k{k}.json");
        assert_eq!(code(&bcfbench(p, &["fit", "--method", "esprit", "--K", k, "--bath", "ohmic.json", "--out", &out])), 0);
    }
    let common = ["--system", "spin.json", "--bath", "ohmic.json", "--models", "models"];
    let mut t = vec!["test"];
    t.extend(common);
    t.extend(["--out", "t"]);
    assert_eq!(code(&bcfbench(p, &t)), 0);
    let mut s = vec!["simulate"];
    s.extend(common);
    s.extend(["--depth", "2", "--steady", "--out", "s"]);
    let o = bcfbench(p, &s);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let target = read_json(&p.join("s/target.json"));
    assert_eq!(target["table"]["k_ref"], 4);
    for row in target["table"]["rows"].as_array().unwrap() {
        assert!((row["trace"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    }

    let o = bcfbench(p, &["report", "--surrogate", "t/surrogate.json", "--target", "s/target.json", "--out", "r"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(p.join("r/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(lines[0].starts_with("K,delta_ho_q2,delta_ho_p2,delta_sx1"));
    assert!(lines[0].contains("delta_cov_sz1_sz2"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,") && lines[2].starts_with("4,"));

    // swapped inputs fail validation and name the offending keys
    let o = bcfbench(p, &["report", "--surrogate", "s/target.json", "--target", "t/surrogate.json", "--out", "r2"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("kind") && err.contains("rows"), "{err}");
}

#[test]
fn report_rejects_mismatched_k_sets() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("s.json"), r#"{"kind":"surrogate","rows":[{"K":2,"delta_ho_q2":0.1,"delta_ho_p2":0.2}]}"#)
        .unwrap();
    std::fs::write(
        p.join("t.json"),
        r#"{"kind":"target","table":{"observables":["a"],"k_ref":3,"rows":[{"k":3,"deltas":[0.0]}]}}"#,
    )
    .unwrap();
    let o = bcfbench(p, &["report", "--surrogate", "s.json", "--target", "t.json", "--out", "r"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("K=2") && stderr(&o).contains("K=3"));
}

#[test]
fn simulate_writes_time_series() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(code(&bcfbench(p, &["system", "two-spin", "--out", "spin.json"])), 0);
    assert_eq!(code(&bcfbench(p, &["fit", "--method", "esprit", "--K", "2", "--bath", "ohmic.json", "--out", "m.json"])), 0);
    let o = bcfbench(
        p,
        &["simulate", "--system", "spin.json", "--bath", "ohmic.json", "--model", "m.json", "--depth", "2", "--t-f", "1", "--out", "s"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(p.join("s/timeseries_K2.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(lines[0].starts_with("t,trace,"));
    // t = 0, 0.1, ..., 1
    assert_eq!(lines.len(), 12);
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_bcfbench"))
        .args(["benchmark", "--bath", "ohmic.json", "--omega0", "1", "--v0", "1", "--out", "o"])
        .current_dir(dir.path())
        .env("BCFBENCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("BCFBENCH_THREADS"));
}
