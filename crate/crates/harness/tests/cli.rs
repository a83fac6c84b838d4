use std::process::Command;

fn sohb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sohb"))
}

#[test]
fn validate_single_criterion_exits_zero() {
    let out = sohb().args(["validate", "--only", "1"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("[PASS]  1"));
    assert!(text.contains("1/1 criteria passed"));
}

#[test]
fn constants_prints_a_csv_table() {
    let out = sohb().args(["constants", "--D", "0.7,1", "--model", "jump"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "D,model,c1,c2,c2p,c3,c4");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.7,jump,"));
    assert!(lines[1].ends_with(&format!(",0.35,{}", lines[1].rsplit(',').next().unwrap())));
}

#[test]
fn gci_prints_constants_and_optionally_the_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("profile.csv");
    let out = sohb()
        .args(["gci", "--D", "1", "--model", "gradual", "--profile"])
        .arg(&table)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec![lines[0], lines[1]]);
    assert_eq!(lines[0], "D,model,c1,c2,c2p,c3,c4");
    assert!(lines[1].starts_with("1.0,gradual,"));
    assert!(String::from_utf8(out.stderr).unwrap().contains("residual"));
    assert!(std::fs::read_to_string(&table).unwrap().starts_with("r,hbar,hbar_prime,residual"));
}

#[test]
fn run_with_a_config_file_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    let out_dir = tmp.path().join("out");
    std::fs::write(
        &cfg,
        r#"{"N": 20, "D": 0.5, "model": "gradual", "representation": "quaternion", "t_end": 0.1, "seed": 1, "box": [3, 3, 3]}"#,
    )
    .unwrap();
    let status = sohb()
        .args(["simulate", "--seed", "99", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out_dir)
        .env("SOHB_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 99);
    assert_eq!(std::fs::read_to_string(out_dir.join("frames_0.ndjson")).unwrap().lines().count(), 20);
}

#[test]
fn invalid_config_fails_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"N": 20, "D": -0.5, "model": "gradual", "representation": "quaternion", "t_end": 1, "seed": 1}"#).unwrap();
    let out = sohb().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("/D"));
}
