use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::Value;

struct Run {
    code: i32,
    dir: PathBuf,
}

impl Run {
    fn manifest(&self) -> Value {
        serde_json::from_slice(&fs::read(self.dir.join("manifest.json")).unwrap()).unwrap()
    }

    fn csv(&self, name: &str) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(self.dir.join(name)).unwrap();
        r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
    }
}

fn steklov(root: &Path, config: &str) -> Run {
    let cfg = root.join("config.json");
    fs::write(&cfg, config).unwrap();
    let dir = root.join("out");
    let st = Command::new(env!("CARGO_BIN_EXE_steklov"))
        .args(["run", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--quiet"])
        .stderr(Stdio::null())
        .status()
        .unwrap();
    Run { code: st.code().unwrap(), dir }
}

const CUBE2: &str = r#""domain": {"cube": {"n": 2, "side": 1.0}}"#;

#[test]
fn steklov_on_coarse_cube_is_all_negative() {
    let t = tempfile::tempdir().unwrap();
    let r = steklov(t.path(), &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1, "eta": 0}}, "task": "steklov"}}"#));
    assert_eq!(r.code, 0);
    let rows = r.csv("spectrum.csv");
    assert_eq!(rows.len(), 52);
    assert!(rows.iter().all(|row| row[1].parse::<f64>().unwrap() < 0.0));
    let m = r.manifest();
    assert_eq!(m["spectrum"]["negative"], 52);
    assert_eq!(m["mesh"]["num_boundary_vertices"], 26);
    assert!(!r.dir.join("modes.vtk").exists());
}

#[test]
fn sigma_check_is_safe_for_negative_alpha() {
    let t = tempfile::tempdir().unwrap();
    let r = steklov(t.path(), &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1}}, "task": "sigma-check"}}"#));
    assert_eq!(r.code, 0);
    let m = r.manifest();
    assert_eq!(m["sigma_check"]["verdict"], "safe");
    assert!(m["sigma_check"]["diagnostic"]["distance"].as_f64().unwrap() >= 1.0);
}

#[test]
fn reruns_are_byte_identical() {
    let config = format!(
        r#"{{{CUBE2}, "params": {{"alpha": 0.5, "theta": 2}}, "task": "solve-neumann",
             "data": {{"rotated_gradient": {{"psi": "x^2 - y"}}}}, "output": {{"formats": ["csv", "json", "vtk"]}}}}"#
    );
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (steklov(a.path(), &config), steklov(b.path(), &config));
    assert_eq!((ra.code, rb.code), (0, 0));
    let names: Vec<_> = fs::read_dir(&ra.dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 4);
    for n in names {
        assert_eq!(fs::read(ra.dir.join(&n)).unwrap(), fs::read(rb.dir.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(steklov(t.path(), "{ not json").code, 2);
    assert_eq!(steklov(t.path(), &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": -1}}, "task": "steklov"}}"#)).code, 2);
    let two_levels = r#"{"domain": {"cube": {"n": 2, "side": 3.0}}, "params": {"alpha": -1, "theta": 1}, "task": "converge",
                         "converge": {"levels": [2, 3], "quantities": ["A1"]}}"#;
    assert_eq!(steklov(t.path(), two_levels).code, 2);
    let missing = r#"{"domain": {"gmsh": {"path": "absent.msh"}}, "params": {"alpha": -1, "theta": 1}, "task": "steklov"}"#;
    assert_eq!(steklov(t.path(), missing).code, 4);

    let r = steklov(t.path(), &format!(r#"{{{CUBE2}, "params": {{"alpha": 40, "theta": 1, "eta": 0}}, "task": "steklov"}}"#));
    assert_eq!(r.code, 3);
    let m = r.manifest();
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["module"], "spectral");
    assert_eq!(m["error"]["name"], "SpectralError::CoercivityFailure");
}

#[test]
fn deflate_reports_the_split() {
    let t = tempfile::tempdir().unwrap();
    // A1 ≈ 4.4495 (triple) and A2 ≈ 8.9 on this mesh
    let r = steklov(
        t.path(),
        r#"{"domain": {"cube": {"n": 3, "side": 3.141592653589793}}, "params": {"alpha": 6.5, "theta": 1},
            "task": "deflate", "count": 10}"#,
    );
    assert_eq!(r.code, 0);
    let d = &r.manifest()["deflation"];
    assert_eq!(d["n"], 3);
    assert!(d["gap_estimate"].as_f64().unwrap() > 6.5);
    assert_eq!(d["dim_deflated"].as_u64().unwrap() + 3, d["dim_constrained"].as_u64().unwrap());
    assert_eq!(r.csv("spectrum.csv").len(), 10);
}

#[test]
fn trace_tasks_accept_csv_and_coefficient_data() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("f.csv"), "vertex,fx,fy,fz\n0,0.0,1.0,0.0\n1,0.5,0.0,0.5\n").unwrap();
    let r = steklov(
        t.path(),
        &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1}}, "task": "solve-dirichlet", "data": {{"csv": "f.csv"}}}}"#),
    );
    assert_eq!(r.code, 0);
    let rep = &r.manifest()["report"];
    assert!(rep["tangential_roundtrip"].as_f64().unwrap() < 1e-8);
    assert!(rep["rotated_roundtrip"].as_f64().unwrap() < 1e-8);
    assert_eq!(r.csv("solution_tangential.csv").len(), 27);

    let r = steklov(
        t.path(),
        &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1}}, "task": "calderon", "data": {{"basis_index": 2}}}}"#),
    );
    assert_eq!(r.code, 0);
    let e = r.csv("expansion.csv");
    assert!((e[1][2].parse::<f64>().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(r.csv("calderon.csv").len(), 26);

    let r = steklov(
        t.path(),
        &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1}}, "task": "dual-solve", "data": {{"coefficients": [1.0, 0.5, -2.0]}}}}"#),
    );
    assert_eq!(r.code, 0);
    assert!(r.manifest()["report"]["pairing_max_relative_error"].as_f64().unwrap() < 1e-8);

    let r = steklov(
        t.path(),
        &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1}}, "task": "solve-neumann", "data": {{"csv": "f.csv"}}}}"#),
    );
    assert_eq!(r.code, 0);
    assert!(r.manifest()["report"]["direct_energy_gap"].as_f64().unwrap() < 1e-8);
}

#[test]
fn aux_spectra_and_matrix_dump() {
    let t = tempfile::tempdir().unwrap();
    let r = steklov(
        t.path(),
        &format!(r#"{{{CUBE2}, "params": {{"alpha": -1, "theta": 1}}, "task": "aux-spectra", "count": 5,
                    "debug": {{"dump_matrices": true}}}}"#),
    );
    assert_eq!(r.code, 0);
    assert_eq!(r.csv("neumann.csv").len(), 5);
    assert!(r.csv("neumann.csv")[0][1].parse::<f64>().unwrap().abs() < 1e-10);
    for m in ["curl_curl", "div_div", "mass", "boundary_mass", "constraint_basis"] {
        let text = fs::read_to_string(r.dir.join(format!("{m}.mtx"))).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
    }
}

#[test]
fn converge_writes_levels_and_orders() {
    let t = tempfile::tempdir().unwrap();
    let r = steklov(
        t.path(),
        r#"{"domain": {"cube": {"n": 1, "side": 3.141592653589793}}, "params": {"alpha": -1, "theta": 1}, "task": "converge",
            "converge": {"levels": [2, 3, 4], "quantities": ["lambdaN2", "lambda1"]}}"#,
    );
    assert_eq!(r.code, 0);
    for l in [2, 3, 4] {
        assert!(r.dir.join(format!("converge_level_{l}.json")).exists());
    }
    let rows = r.csv("converge.csv");
    assert_eq!(rows.len(), 6);
    let tables = &r.manifest()["converge"];
    assert_eq!(tables[0]["quantity"], "lambdaN2");
    assert!(tables[0]["final_order"].as_f64().unwrap() > 1.5);
}
