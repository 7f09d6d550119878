use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normcalc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn eval_prints_the_norm() {
    let dir = tempfile::tempdir().unwrap();
    let l1 = corpus("l1_2.space.json");
    let o = run(dir.path(), &["space", "eval", "--space", l1.to_str().unwrap(), "--vector", "1,1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "2");
    let o = run(dir.path(), &["space", "eval", "--space", l1.to_str().unwrap(), "--vector", "1/3,-1/2", "--exact"]);
    assert_eq!(stdout(&o).trim(), "5/6");
}

#[test]
fn bm_writes_a_witness_and_echoes_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = corpus("l1_2.space.json");
    let b = corpus("linf_2.space.json");
    let args = ["dist", "bm", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(), "--seed", "7"];
    let o = run(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["value"].as_f64().unwrap() <= 1.0 + 1e-6);
    assert_eq!(report["seed"], 7);
    assert_eq!(report["config"]["tolerances"]["seed"], 7);
    assert!(dir.path().join("bm.witness.json").exists());
    let again = run(dir.path(), &args);
    assert_eq!(stdout(&o), stdout(&again));
}

#[test]
fn scan_has_the_closed_form_bound_column() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["amalgam", "scan", "--p", "1,2,inf", "--trials", "20", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut bounds = std::collections::BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[col("seed")], "3");
        bounds.insert(rec[col("p")].to_string(), rec[col("bound")].parse::<f64>().unwrap());
    }
    assert_eq!(bounds["1"], 1.0);
    assert!((bounds["2"] - std::f64::consts::SQRT_2).abs() < 1e-12);
    assert_eq!(bounds["inf"], 2.0);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let l1 = corpus("l1_2.space.json");
    let l1 = l1.to_str().unwrap();
    let code = |args: &[&str]| run(dir.path(), args).status.code();
    assert_eq!(code(&["space", "eval", "--space", l1, "--vector", "1,1,1"]), Some(2));
    assert_eq!(code(&["space", "eval", "--space", l1, "--bogus"]), Some(4));
    std::fs::write(dir.path().join("bad.space.json"), "{\"name\": \"x\", \"dim\": 2, \"norm\": {\"kind\": \"cube\"}}").unwrap();
    assert_eq!(code(&["space", "validate", "--space", "bad.space.json"]), Some(4));
    std::fs::write(
        dir.path().join("flat.space.json"),
        "{\"name\": \"x\", \"dim\": 2, \"norm\": {\"kind\": \"polytope_h\", \"functionals\": [[1, 0]]}}",
    )
    .unwrap();
    assert_eq!(code(&["space", "validate", "--space", "flat.space.json"]), Some(2));
}

#[test]
fn envelope_build_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = corpus("l1_2.space.json");
    let o = run(
        dir.path(),
        &["envelope", "build", "--spaces", a.to_str().unwrap(), "--stages", "2", "--out", "env"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("env/history.json").exists());
    let o = run(
        dir.path(),
        &["envelope", "report", "--state", "env", "--probes", a.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("stage,dim,probe,distortion,extension_defect,transitivity_defect,lambda_prime,p,seed"));
    assert_eq!(text.lines().count(), 4);
}
