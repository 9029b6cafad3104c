use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use foilwind::config::preset;
use serde_json::Value;

fn foilwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foilwind")).args(args).output().expect("binary runs")
}

/// A coarse four-turn config, fast enough for a test.
fn small_config(dir: &Path, name: &str, frequency: f64) -> PathBuf {
    let mut cfg = preset(name).unwrap();
    cfg.geometry.n_turns = 4;
    cfg.mesh.n_alpha = 4;
    cfg.mesh.n_beta = 4;
    cfg.solver.periods = 1.0;
    cfg.excitation.frequency = frequency;
    cfg.solver.dt_init /= frequency / 50.0;
    cfg.solver.dt_max /= frequency / 50.0;
    cfg.solver.dt_min /= frequency / 50.0;
    let path = dir.join(format!("{name}_{frequency}.toml"));
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mesh_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mesh");
    let o = foilwind(&["mesh", "--preset", "pancake2d_fcm_tw", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["variant"], "fcm_t_omega");
    assert_eq!(v["coil_quads"], 120);
    let total: u64 = ["n_edge_dofs", "n_nodal_dofs", "n_cut_dofs", "n_voltage_dofs"]
        .iter()
        .map(|k| v[k].as_u64().unwrap())
        .sum();
    assert_eq!(v["n_dofs"].as_u64().unwrap(), total);
    assert!(std::fs::read_to_string(out.join("mesh.vtk")).unwrap().starts_with("# vtk DataFile Version 3.0"));
}

#[test]
fn run_then_compare_with_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "pancake2d_fcm_hphi", 50.0);
    let out = tmp.path().join("run");
    let o = foilwind(&["run", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "slices.csv", "config.toml", "peak.vtk", "summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["variant"], "fcm_h_phi");
    assert!(summary["mean_losses"].as_f64().unwrap() > 0.0);

    let o = foilwind(&["compare", s(&out), s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("compare.json"));
    assert_eq!(report["r_squared"].as_f64(), Some(1.0));
    assert_eq!(report["rel_err_p"].as_f64(), Some(0.0));
}

#[test]
fn compare_rejects_different_frequencies() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ca = small_config(tmp.path(), "pancake2d_fcm_tw", 50.0);
    let cb = small_config(tmp.path(), "pancake2d_fcm_tw", 60.0);
    assert!(foilwind(&["run", s(&ca), "--out", s(&a)]).status.success());
    assert!(foilwind(&["run", s(&cb), "--out", s(&b)]).status.success());
    let o = foilwind(&["compare", s(&a), s(&b)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible excitations"));
}

#[test]
fn missing_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "pancake2d_fcm_hphi", 50.0);
    let text: String = std::fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("frequency"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&cfg, text).unwrap();
    let o = foilwind(&["run", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("excitation.frequency"));
}

#[test]
fn unknown_preset_exits_with_config_error() {
    let o = foilwind(&["run", "--preset", "pancake3d"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pancake2d_ref"));
}

#[test]
fn sweep_single_value_and_empty_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "pancake2d_fcm_tw", 50.0);
    let out = tmp.path().join("sweep");
    let o = foilwind(&["sweep", s(&cfg), "--out", s(&out), "--param", "voltage_order", "--values", "2", "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["voltage_order", "P", "one_minus_r2", "rel_err_p", "n_dofs", "linsys_count"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "2");
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.0);

    let o = foilwind(&["sweep", s(&cfg), "--out", s(&out), "--param", "voltage_order", "--values="]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn sweep_runs_in_parallel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "pancake2d_fcm_tw", 50.0);
    let out = tmp.path().join("sweep");
    let o = foilwind(&["sweep", s(&cfg), "--out", s(&out), "--param", "n_alpha", "--values", "4,6", "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<csv::StringRecord> =
        csv::Reader::from_path(out.join("sweep.csv")).unwrap().records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert!(out.join("n_alpha_4").join("trace.csv").is_file());
    assert!(out.join("n_alpha_6").join("trace.csv").is_file());
}

#[test]
fn sweep_rejects_unresolvable_voltage_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "pancake2d_fcm_tw", 50.0);
    let out = tmp.path().join("sweep");
    let o = foilwind(&["sweep", s(&cfg), "--out", s(&out), "--param", "n_alpha", "--values", "2,4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("voltage polynomial"));
}
