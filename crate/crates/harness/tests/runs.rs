use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde_json::{json, Value};

use sohb_core::rotations::quat_to_rot;
use sohb_core::{Rotation, UnitQuaternion};
use sohb_harness::config::{load_config, parse_config, validate_metadata, RunConfig};
use sohb_harness::output::{read_frames, FrameRecord, Metadata, OrientKind, CONSTANTS_HEADER};
use sohb_harness::runs::{self, METADATA_FILE};
use sohb_harness::HarnessError;

fn config(extra: Value) -> RunConfig {
    let mut base = json!({
        "N": 40, "D": 0.3, "model": "jump", "representation": "quaternion",
        "t_end": 2.0, "seed": 7, "box": [4.0, 4.0, 4.0], "save_every": 50
    });
    for (k, v) in extra.as_object().unwrap() {
        base[k] = v.clone();
    }
    parse_config(&base.to_string()).unwrap()
}

fn frames(path: &Path) -> Vec<FrameRecord> {
    read_frames(BufReader::new(fs::File::open(path).unwrap())).unwrap()
}

fn sidecar(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(METADATA_FILE)).unwrap()).unwrap()
}

fn rotation_of(r: &FrameRecord) -> Rotation {
    match r.orient.kind {
        OrientKind::Mat => Rotation::from_row_slice(&r.orient.v).unwrap(),
        OrientKind::Quat => quat_to_rot(&UnitQuaternion::from_slice(&r.orient.v).unwrap()),
    }
}

#[test]
fn matrix_and_quaternion_files_are_related_by_phi() {
    let init = json!({"kind": "von-mises", "center": [0.9, 0.1, -0.3, 0.2], "D": 0.05});
    let tmp = tempfile::tempdir().unwrap();
    let (qd, md) = (tmp.path().join("q"), tmp.path().join("m"));
    runs::simulate(&config(json!({"init": init, "D": 0.05})), &qd).unwrap();
    runs::simulate(&config(json!({"init": init, "D": 0.05, "representation": "matrix"})), &md).unwrap();
    let q = frames(&qd.join("frames_0.ndjson"));
    let m = frames(&md.join("frames_0.ndjson"));
    assert_eq!(q.len(), 40 * 4);
    assert_eq!(q.len(), m.len());
    for (a, b) in q.iter().zip(&m) {
        assert_eq!((a.t, a.id), (b.t, b.id));
        assert_eq!(a.orient.kind, OrientKind::Quat);
        assert_eq!(b.orient.kind, OrientKind::Mat);
        assert!((rotation_of(a).matrix() - rotation_of(b).matrix()).amax() < 1e-8);
        for i in 0..3 {
            assert!((a.x[i] - b.x[i]).abs() < 1e-8);
        }
    }
    for dir in [&qd, &md] {
        let meta = sidecar(dir);
        assert_eq!(meta["replicas"][0]["degenerate"], 0);
        assert!(meta["replicas"][0]["events"].as_u64().unwrap() > 0);
    }
}

#[test]
fn empty_run_writes_metadata_and_no_lines() {
    let tmp = tempfile::tempdir().unwrap();
    for model in ["jump", "gradual"] {
        let dir = tmp.path().join(model);
        runs::simulate(&config(json!({"t_end": 0.0, "model": model})), &dir).unwrap();
        assert_eq!(fs::read_to_string(dir.join("frames_0.ndjson")).unwrap(), "");
        let meta = sidecar(&dir);
        assert_eq!(meta["replicas"][0]["frames"], 0);
        validate_metadata(&meta).unwrap();
    }
}

#[test]
fn same_config_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for (model, extra) in [("jump", json!({})), ("gradual", json!({"t_end": 0.2, "save_every": 5}))] {
        let mut cfg = config(extra);
        cfg.model = if model == "jump" { sohb_core::micro::Model::Jump } else { sohb_core::micro::Model::Gradual };
        cfg.replicas = 3;
        let (a, b) = (tmp.path().join(format!("{model}_a")), tmp.path().join(format!("{model}_b")));
        runs::simulate(&cfg, &a).unwrap();
        runs::simulate(&cfg, &b).unwrap();
        let meta = sidecar(&a);
        for f in meta["files"].as_array().unwrap() {
            let f = f.as_str().unwrap();
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        assert_eq!(fs::read(a.join(METADATA_FILE)).unwrap(), fs::read(b.join(METADATA_FILE)).unwrap());
        // Replicas draw from distinct streams.
        assert_ne!(fs::read(a.join("frames_0.ndjson")).unwrap(), fs::read(a.join("frames_1.ndjson")).unwrap());
    }
}

#[test]
fn every_sidecar_revalidates() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: Vec<(RunConfig, fn(&RunConfig, &Path) -> sohb_harness::Result<Metadata>)> = vec![
        (config(json!({})), runs::simulate),
        (config(json!({"mode": "single", "t_end": 20.0, "single": {"field": [0.0, 1.0, 0.0, 0.0], "burn_in": 1.0}})), runs::single),
        (config(json!({"mode": "constants", "D": 0.7})), runs::constants),
        (config(json!({"mode": "gci", "model": "gradual"})), runs::gci_run),
        (config(json!({"mode": "macro", "t_end": 0.5, "dt": 0.01, "macro": {"nodes": 32}})), runs::macro_run),
    ];
    for (k, (cfg, run)) in cases.into_iter().enumerate() {
        let dir = tmp.path().join(k.to_string());
        let meta = run(&cfg, &dir).unwrap();
        let on_disk = sidecar(&dir);
        validate_metadata(&on_disk).unwrap();
        // The echoed config is complete and parses back to the same run.
        let back: RunConfig = serde_json::from_value(on_disk["config"].clone()).unwrap();
        assert_eq!(back, cfg);
        for f in &meta.files {
            assert!(dir.join(f).exists(), "{f}");
        }
    }
}

#[test]
fn constants_and_profile_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(json!({"mode": "gci", "model": "gradual", "D": 0.7}));
    runs::gci_run(&cfg, tmp.path()).unwrap();
    let csv = fs::read_to_string(tmp.path().join("constants.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CONSTANTS_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "0.7");
    assert_eq!(row[1], "gradual");
    assert_eq!(row[5], "0.35");
    let profile = fs::read_to_string(tmp.path().join("gci_profile.csv")).unwrap();
    assert!(profile.starts_with("r,hbar,hbar_prime,residual\n"));
    assert_eq!(profile.lines().count(), 201);
}

#[test]
fn single_run_records_post_burn_in_states() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(json!({"mode": "single", "t_end": 50.0, "single": {"burn_in": 5.0}}));
    runs::single(&cfg, tmp.path()).unwrap();
    let recs = frames(&tmp.path().join("single.ndjson"));
    assert!(recs.len() > 20);
    assert!(recs.iter().all(|r| r.t >= 5.0 && r.t <= 50.0 && r.id == 0));
}

#[test]
fn macro_run_conserves_mass_and_writes_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    for repr in ["quaternion", "matrix"] {
        let dir = tmp.path().join(repr);
        let cfg = config(json!({"mode": "macro", "representation": repr, "t_end": 1.0, "dt": 0.01,
                                "save_every": 25, "macro": {"nodes": 32}}));
        runs::macro_run(&cfg, &dir).unwrap();
        let csv = fs::read_to_string(dir.join("macro.csv")).unwrap();
        let header = csv.lines().next().unwrap();
        let columns = if repr == "matrix" { 17 } else { 12 };
        assert_eq!(header.split(',').count(), columns);
        assert!(header.starts_with("t,i,j,k,x,y,z,rho,"));
        // initial snapshot plus 4 saves of 32 nodes
        assert_eq!(csv.lines().count(), 1 + 5 * 32);
        let meta = sidecar(&dir);
        let (m0, m1) = (meta["mass"]["initial"].as_f64().unwrap(), meta["mass"]["final"].as_f64().unwrap());
        assert!(((m1 - m0) / m0).abs() < 1e-12);
    }
}

#[test]
fn config_files_load_with_defaults_and_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.json");
    fs::write(&path, r#"{"N": 10, "D": 1.0, "model": "gradual", "representation": "matrix", "t_end": 1, "seed": 3}"#).unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.dt, 0.01);
    assert_eq!(cfg.save_every, 10);
    assert_eq!(cfg.box_lengths, [10.0; 3]);

    fs::write(&path, r#"{"N": 10, "D": -1.0, "model": "gradual", "representation": "matrix", "t_end": 1, "seed": 3}"#).unwrap();
    match load_config(&path) {
        Err(HarnessError::Schema { path, .. }) => assert!(path.contains('D')),
        other => panic!("{other:?}"),
    }
    fs::write(&path, r#"{"N": 10, "D": 1.0, "model": "gradual", "representation": "matrix", "t_end": 1, "seed": 3, "colour": 1}"#).unwrap();
    assert!(matches!(load_config(&path), Err(HarnessError::Schema { .. })));
    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(load_config(&path), Err(HarnessError::Parse { .. })));
    assert!(matches!(load_config(&tmp.path().join("missing.json")), Err(HarnessError::Io { .. })));
}
