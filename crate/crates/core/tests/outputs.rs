use foilwind::config::{preset, RunConfig};
use foilwind::postprocess::{csv_header, r_squared, read_trace_csv};
use foilwind::study;

fn small(name: &str) -> RunConfig {
    let mut cfg = preset(name).unwrap();
    cfg.geometry.n_turns = 4;
    cfg.mesh.n_alpha = 4;
    cfg.mesh.n_beta = 4;
    cfg.solver.periods = 1.0;
    cfg
}

#[test]
fn run_directory_contents() {
    let dir = tempfile::tempdir().unwrap();
    let out = study::run(&small("pancake2d_fcm_hphi")).unwrap();
    study::write_outputs(&out, dir.path()).unwrap();

    let header = csv_header(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(header, ["t", "p", "current", "newton_iters", "dt", "circulation"]);
    let (times, p) = read_trace_csv(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(times.len(), out.trace.times.len());
    for (a, b) in p.iter().zip(&out.trace.losses) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }

    let slices = csv_header(&dir.path().join("slices.csv")).unwrap();
    assert_eq!(slices.len(), 1 + out.disc.mesh.n_alpha());

    let vtk = std::fs::read_to_string(dir.path().join("peak.vtk")).unwrap();
    let mut lines = vtk.lines();
    assert_eq!(lines.next(), Some("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("DATASET UNSTRUCTURED_GRID"));
    assert!(vtk.contains(&format!("CELL_DATA {}", out.disc.mesh.quads.len())));
    assert!(vtk.contains("SCALARS j_norm double 1"));

    let back = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(back, out.config);

    let s = &out.summary;
    assert_eq!(s.n_dofs, s.n_edge_dofs + s.n_nodal_dofs + s.n_cut_dofs + s.n_voltage_dofs);
    assert!(s.mean_losses > 0.0 && s.peak_losses >= s.mean_losses);
    assert!(s.max_ampere_error < 1e-10);
}

#[test]
fn series_compares_to_itself_exactly() {
    let out = study::run(&small("pancake2d_fcm_tw")).unwrap();
    let series = out.series();
    let rep = r_squared(&series, &series).unwrap();
    assert_eq!(rep.r_squared, 1.0);
    assert_eq!(rep.rel_err_p, 0.0);
}

#[test]
fn unreadable_config_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[geometry]\ninner_radius = 0.025\n").unwrap();
    let err = RunConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("bad.toml"), "{err}");
    assert!(err.contains("missing required key"), "{err}");
}
