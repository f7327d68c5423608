use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cot_lab::scenario_file::ScenarioFile;
use cot_lab_core::{adaptation, constructions};
use proptest::prelude::*;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cot-lab"));
    c.env_remove("COT_LAB_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[test]
fn fixtures_match_the_builtins() {
    let cases = [
        ("nfl1.json", constructions::nfl_instance(1, 3, 1.0, 0.1).unwrap()),
        ("nfl2.json", constructions::nfl_instance(2, 2, 5.0, 0.1).unwrap()),
        ("nfl3.json", constructions::nfl_instance(3, 4, 10.0, 0.01).unwrap()),
        ("tight.json", constructions::tight_instance(4, 1.0, 0.5, 2.0).unwrap()),
        ("omr.json", constructions::omr_instance(2, 3.0, 10).unwrap()),
        ("arith.json", constructions::arithmetic_scenario().unwrap()),
    ];
    for (name, scenario) in cases {
        let text = read(name);
        assert_eq!(ScenarioFile::from_scenario(&scenario).to_json(), text, "{name}");
        assert_eq!(ScenarioFile::parse(&text).unwrap().to_scenario().unwrap(), scenario, "{name}");
    }
    for (name, inst) in [
        ("tiny_adaptation.json", adaptation::tiny_fixture().unwrap()),
        ("singleton_adaptation.json", adaptation::singleton_fixture().unwrap()),
    ] {
        let text = read(name);
        assert_eq!(ScenarioFile::from_instance(&inst).to_json(), text, "{name}");
        assert_eq!(ScenarioFile::parse(&text).unwrap().to_instance().unwrap(), inst, "{name}");
    }
}

#[test]
fn every_fixture_verifies() {
    for name in [
        "nfl1.json",
        "nfl2.json",
        "nfl3.json",
        "tight.json",
        "omr.json",
        "arith.json",
        "tiny_adaptation.json",
        "singleton_adaptation.json",
    ] {
        let o = run(&["verify", fixture(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("result=PASS"));
    }
}

#[test]
fn tampered_expectation_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = ScenarioFile::parse(&read("nfl2.json")).unwrap();
    doc.expectations.tmr = doc.expectations.tmr.map(|t| t + 1.0);
    let path = dir.path().join("tampered.json");
    std::fs::write(&path, doc.to_json()).unwrap();
    let o = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL expect.tmr"), "{}", stdout(&o));
}

#[test]
fn malformed_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["verify", path.to_str().unwrap()]).status.code(), Some(2));
    let text = read("nfl1.json").replacen("\"affine\"", "\"quadratic\"", 1);
    std::fs::write(&path, text).unwrap();
    let o = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));
    assert_eq!(run(&["bound", fixture("nfl1.json").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_writes_json_and_csv_reports() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv_path = dir.path().join("r.csv");
    let o = run(&[
        "verify",
        "--builtin",
        "omr",
        "--K",
        "5",
        "--M",
        "10",
        "--json",
        json.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["kind"], "verification");
    assert!((v["risks"]["omr"].as_f64().unwrap() - 10.0).abs() <= 1e-9);
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), cot_lab::report::RISK_COLUMNS.to_vec());
    let row = rdr.records().next().unwrap().unwrap();
    assert!((row[4].parse::<f64>().unwrap() - 10.0).abs() <= 1e-9);
    assert_eq!(&row[7], "false");
}

#[test]
fn verify_arith_reports_the_family() {
    let o = run(&["verify", "--builtin", "arith"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("family=900/900 recoverable"));
}

#[test]
fn arith_prints_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("a.csv");
    let o = run(&["arith", "--csv", csv_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("Q^(1)(7·26) = 7·2\nA^(1)(7·26) = 14\n"), "{text}");
    assert!(text.contains("A^(4)(7·26) = 182\n"));
    assert!(text.contains("family=900/900 recoverable"));
    assert_eq!(csv::Reader::from_path(&csv_path).unwrap().records().count(), 900);
}

#[test]
fn bound_on_fixtures() {
    let o = run(&["bound", fixture("tiny_adaptation.json").to_str().unwrap(), "--trials", "200", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["kind"], "coverage");
    assert_eq!(v["trials"], 200);
    assert!(v["frequency"].as_f64().unwrap() <= 0.1);
    for key in ["empirical_risk", "empirical_divergence", "rademacher_s", "deviation", "beta", "total"] {
        assert!(v["per_addend_means"][key].is_number(), "{key}");
    }

    let o = run(&["bound", "--builtin", "singleton", "--trials", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["violations"], 0);

    assert_eq!(run(&["bound", "--builtin", "tiny", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn seed_env_overrides_the_default() {
    let with_flag = run(&["bound", "--builtin", "tiny", "--trials", "20", "--seed", "77"]);
    let with_env = bin()
        .args(["bound", "--builtin", "tiny", "--trials", "20"])
        .env("COT_LAB_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(stdout(&with_flag), stdout(&with_env));
    assert!(stdout(&with_env).contains("\"seed\": 77"));
    let bad = bin().args(["bound", "--builtin", "tiny"]).env("COT_LAB_SEED", "x").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_writes_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let o = run(&["sweep", "--K", "2:4:1", "--phi", "0:2:0.5", "--delta", "0:2:1", "--csv", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("points=45 disagreements=0"));
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let heads: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(heads[..6], ["K", "phi", "delta", "alpha", "regime", "bound"]);
    assert_eq!(rdr.records().count(), 45);
}

#[test]
fn amp_cross_checks_the_word_oracle() {
    let o = run(&["amp", "4", "0.5", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("alpha=4\n"));
    assert!(text.contains("word_oracle C_3=8"));
    assert_eq!(run(&["amp", "3", "nan", "1"]).status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_scenarios_round_trip(seed in any::<u64>()) {
        let s = constructions::random_certified_scenario(seed).unwrap();
        let text = ScenarioFile::from_scenario(&s).to_json();
        let doc = ScenarioFile::parse(&text).unwrap();
        prop_assert_eq!(doc.to_json(), text);
        prop_assert_eq!(doc.to_scenario().unwrap(), s);
    }

    #[test]
    fn random_adaptation_instances_round_trip(seed in any::<u64>()) {
        let (inst, _) = adaptation::random_fixture(seed).unwrap();
        let text = ScenarioFile::from_instance(&inst).to_json();
        let doc = ScenarioFile::parse(&text).unwrap();
        prop_assert_eq!(doc.to_json(), text);
        prop_assert_eq!(doc.to_instance().unwrap(), inst);
    }
}
