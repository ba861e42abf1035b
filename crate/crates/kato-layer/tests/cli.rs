use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kato-layer");

const CHANNEL: &str = r#"
[domain]
kind = "channel"
lx = 1.0
lz = 1.0
height = 1.0
bar_delta = 0.5

[flow]
family = "heat_shear"
modes = [[1, 0.1]]
euler = "plug"

[run]
nu = [1e-2, 1e-3]
t_final = 1.0
delta = 0.5
max_depth = 1
mesh_size = 0.25
seed = 3
"#;

const SPHERE: &str = r#"
[domain]
kind = "sphere"
radius = 1.0
bar_delta = 0.5

[flow]
family = "synthetic"
bursts = []

[run]
nu = [1e-3]
t_final = 1.0
mesh_size = 0.1
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(BIN).arg("--config").arg(&path).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn mesh_succeeds_and_reports_lineage() {
    let dir = tempfile::tempdir().unwrap();
    let mesh_json = dir.path().join("mesh.json");
    let o = run(dir.path(), CHANNEL, &["mesh", "--mesh-out", mesh_json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["charts_valid"], true);
    assert!(v["lineage"].is_string());
    assert!(mesh_json.exists());
}

#[test]
fn oversized_mesh_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), SPHERE, &["mesh", "--size", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible size"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &CHANNEL.replace("t_final = 1.0\n", ""), &["sweep"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("t_final"), "{}", stderr(&o));
    let o = run(dir.path(), &CHANNEL.replace("lz = 1.0\n", ""), &["mesh"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("domain.lz"));
    for bad in [
        CHANNEL.replace("\"heat_shear\"", "\"vortex\""),
        CHANNEL.replace("nu = [1e-2, 1e-3]", "nu = [1e-3, 1e-2]"),
        CHANNEL.replace("nu = [1e-2, 1e-3]", "nu = []"),
        CHANNEL.replace("seed = 3", "seed = 3\nspeed = 4"),
        CHANNEL.replace("bar_delta = 0.5", "bar_delta = 0.9"),
        "[domain\n".to_string(),
    ] {
        let o = run(dir.path(), &bad, &["sweep"]);
        assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    }
    let o = Command::new(BIN).args(["--config", "/nonexistent/run.toml", "mesh"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = Command::new(BIN).arg("levitate").output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn sweep_is_deterministic_and_saved() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let a = run(dir.path(), CHANNEL, &["sweep", "--out", out.to_str().unwrap()]);
    let b = run(dir.path(), CHANNEL, &["sweep"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# kato-layer sweep family=heat_shear seed=3"));
    let header = lines.next().unwrap();
    assert!(header.starts_with("nu,t_final,a,l,re,delta"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",ok,")));
    assert_eq!(std::fs::read_to_string(out.join("sweep.csv")).unwrap(), text);
}

#[test]
fn overrides_replace_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), CHANNEL, &["--nu", "5e-3", "--t-final", "0.5", "sweep"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0.005,0.5,"), "{}", rows[0]);
}

#[test]
fn partition_summary_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(dir.path(), &CHANNEL.replace("nu = [1e-2, 1e-3]", "nu = [1e-2]"), &["partition", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["checks"]["passed"], true);
    assert_eq!(v["checks"]["membership_failures"], 0);
    assert_eq!(v["seed"], 3);
    let full: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("partition.json")).unwrap()).unwrap();
    assert_eq!(full["checks"], v["checks"]);
}

#[test]
fn bound_and_kato_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), CHANNEL, &["bound"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["report"]["nu"], 1e-2);
    let o = run(dir.path(), CHANNEL, &["kato"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["chain"].as_array().unwrap().iter().all(|r| r["holds"] == true));
}
