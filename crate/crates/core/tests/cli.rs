use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rescomp"));
    c.env_remove("RESCOMP_SEED");
    c
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn solve_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("split_feasibility.json")).unwrap();
    let mut spec: serde_json::Value = serde_json::from_str(&text).unwrap();
    let report_path = dir.path().join("report.json");
    spec["output"] = serde_json::json!({ "report": report_path });
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, spec.to_string()).unwrap();
    let trace = dir.path().join("trace.csv");

    let out = bin().arg("solve").arg(&cfg).arg("--trace").arg(&trace).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["verdict"], "relaxed-only");
    assert!(report["oracle"]["distance"].as_f64().unwrap() <= 1e-6);
    assert!((report["original_residual"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,fp_residual,var_residual,dist_ref,wall_ns"));
    assert_eq!(lines.count(), report["iterations"].as_u64().unwrap() as usize + 1);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    let cfg = |n: &str| config(n).display().to_string();
    assert_eq!(code(&["solve", &cfg("consistent.json")]), Some(0));
    assert_eq!(code(&["solve", &cfg("wiener.json")]), Some(0));
    assert_eq!(code(&["solve", &cfg("feasibility_product.json")]), Some(0));
    assert_eq!(code(&["solve", &cfg("prox_mixture.json")]), Some(0));
    assert_eq!(code(&["solve", &cfg("unsafe_norm.json")]), Some(1));
    assert_eq!(code(&["solve", &cfg("unsafe_norm.json"), "--unsafe-norm"]), Some(2));
    assert_eq!(code(&["solve", "/definitely/not/here.json"]), Some(1));
}

#[test]
fn gate_diagnostic_names_the_condition() {
    let out = bin().arg("solve").arg(config("unsafe_norm.json")).output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("contraction condition"), "{err}");
}

#[test]
fn parse_errors_are_structural() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"kind\": \"split-feasibility\",\n  \"bogus\": 1\n}").unwrap();
    let out = bin().arg("solve").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn oracle_prints_the_reference() {
    let out = bin().arg("oracle").arg(config("split_feasibility.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["point"], serde_json::json!([2.0, 2.0]));
    assert_eq!(v["rank_deficient"], false);

    let out = bin().arg("oracle").arg(config("prox_mixture.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_comes_from_the_environment() {
    let run = |seed: Option<&str>| {
        let mut c = bin();
        if let Some(s) = seed {
            c.env("RESCOMP_SEED", s);
        }
        let out = c.arg("solve").arg(config("prox_mixture.json")).output().unwrap();
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    assert_eq!(run(None)["seed"], 7);
    let a = run(Some("11"));
    assert_eq!(a["seed"], 11);
    assert_ne!(a["final_iterate"], run(None)["final_iterate"]);
    let out = bin().env("RESCOMP_SEED", "x").arg("solve").arg(config("prox_mixture.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn props_exit_codes() {
    let out = bin().args(["props", "--trials", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("warning"));

    let out = bin().args(["props", "--trials", "20", "--seed", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = bin().args(["props", "--trials", "20", "--corrupt-adjoint"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL adjoint"));
}
