use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use slenderfall::cli::{execute, Mode, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slenderfall"))
}

fn run(mode: &str, config: &Path, out: &Path) -> i32 {
    bin()
        .args([mode, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

const RING: &str = r#"{
  "body": { "kind": "ring", "radius": 1.0 },
  "fluid": { "nondimensional": { "ell": 0.1 } },
  "masses": { "complementary": 0.5 },
  "discretization": { "panels": 8, "order": 4 }
}"#;

const HELIX_FALL: &str = r#"{
  "body": { "kind": "helix", "radius": 1.0, "pitch": 1.0, "turns": 2.0 },
  "fluid": { "nondimensional": { "ell": 0.1, "reynolds": 0.01 } },
  "masses": { "complementary": 0.2 },
  "discretization": { "panels": 8, "order": 4 },
  "dynamics": { "dt": 0.1, "t_end": 20.0, "steady_tol": 1e-6, "output_stride": 10 }
}"#;

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn steady_ring_reports_symmetric_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ring.json", RING);
    let out = tmp.path().join("out");
    assert_eq!(run("steady", &cfg, &out), 0);
    let r = report(&out);
    let states = r["steady_states"].as_array().unwrap();
    assert_eq!(states.len(), 1);
    assert_eq!(states[0]["lambda"], 0.0);
    assert_eq!(states[0]["multiplicity"], 3);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert!(r["resistance"]["k_tt"].is_array());
    assert!(r["diagnostics"]["nodes"].as_u64().unwrap() == 32);
}

#[test]
fn report_is_deterministic_and_echo_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "helix.json", HELIX_FALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("fall", &cfg, &a), 0);
    assert_eq!(run("fall", &cfg, &b), 0);
    for f in ["report.json", "trajectory.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let echoed: RunConfig = serde_json::from_value(report(&a)["config"].clone()).unwrap();
    assert_eq!(echoed, RunConfig::from_json(HELIX_FALL).unwrap());

    let csv = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("t,xi1,xi2,xi3,omega1"));
    assert_eq!(lines.count(), 21);
}

#[test]
fn missing_body_is_a_config_error_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"fluid":{"nondimensional":{"ell":0.1}},"discretization":{"panels":8}}"#,
    );
    let out = tmp.path().join("out");
    let o = bin()
        .args(["steady", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cli::load_config"));
    assert!(!out.exists());
}

#[test]
fn bad_geometry_and_missing_file_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "neg.json",
        &RING.replace("\"radius\": 1.0", "\"radius\": -1.0"),
    );
    assert_eq!(run("steady", &cfg, &out), 2);
    assert_eq!(run("steady", &tmp.path().join("nope.json"), &out), 2);
    let cfg = write_config(tmp.path(), "nodyn.json", RING);
    assert_eq!(run("fall", &cfg, &out), 2);
    assert!(!out.exists());
}

#[test]
fn unstable_integration_is_a_solver_error() {
    let tmp = tempfile::tempdir().unwrap();
    let json = HELIX_FALL
        .replace("\"reynolds\": 0.01", "\"reynolds\": 1.0")
        .replace("\"dt\": 0.1", "\"dt\": 50.0")
        .replace("\"t_end\": 20.0", "\"t_end\": 1e6");
    let cfg = write_config(tmp.path(), "unstable.json", &json);
    let out = tmp.path().join("out");
    let o = bin()
        .args(["fall", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("dynamics::integrate"));
    assert!(!out.exists());
}

#[test]
fn kernel_check_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "k.json",
        &RING.replace("\"ell\": 0.1", "\"ell\": 1.0"),
    );
    let out = tmp.path().join("out");
    assert_eq!(run("kernel-check", &cfg, &out), 0);
    let csv = fs::read_to_string(out.join("kernel_check.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[3] <= 1e-8 && r[6] <= 1e-8, "{r:?}");
    }
    assert_eq!(report(&out)["kernel_check"]["passed"], true);
}

#[test]
fn convergence_tables() {
    let rod = RunConfig::from_json(
        r#"{"body":{"kind":"rod","length":1.0},"fluid":{"nondimensional":{"ell":0.1}},"discretization":{"panels":8}}"#,
    )
    .unwrap();
    let out = execute(Mode::Convergence, &rod).unwrap();
    let t = out.report.convergence.unwrap();
    assert_eq!(t.rows.len(), 4);
    assert!(t.passed);
    assert!(t.differences[2] < t.differences[1] && t.differences[1] < t.differences[0]);
    assert!(out.gate_failure.is_none());

    let mut ring = rod.clone();
    ring.body = slenderfall::geometry::CurveSpec::ring(1.0);
    let t = execute(Mode::Convergence, &ring)
        .unwrap()
        .report
        .convergence
        .unwrap();
    for row in &t.rows {
        assert!(row.k_tr_norm <= 1e-12 * row.grand.norm());
    }

    let mut helix = rod;
    helix.body = slenderfall::geometry::CurveSpec::helix(1.0, 1.0, 2.0);
    helix.fluid = RunConfig::from_json(
        r#"{"body":{"kind":"rod","length":1.0},"fluid":{"nondimensional":{"ell":0.2}},"discretization":{"panels":8}}"#,
    )
    .unwrap()
    .fluid;
    let t = execute(Mode::Convergence, &helix)
        .unwrap()
        .report
        .convergence
        .unwrap();
    let (l3, l4) = (t.rows[2].lambda, t.rows[3].lambda);
    assert!(l4.abs() > 0.0);
    // three significant digits by 8N
    assert!((l4 - l3).abs() <= 5e-3 * l4.abs(), "{l3} {l4}");
}

#[test]
fn convergence_mode_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ring.json",
        &RING.replace("\"panels\": 8", "\"panels\": 4"),
    );
    let out = tmp.path().join("out");
    assert_eq!(run("convergence", &cfg, &out), 0);
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 40);
}

#[test]
fn polyline_vertices_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("v.csv"),
        "x,y,z\n0,0,0\n1,0,0\n1,1,0\n1,1,1\n",
    )
    .unwrap();
    let inline = r#"{
      "body": { "kind": "polyline", "vertices": [[0,0,0],[1,0,0],[1,1,0],[1,1,1]] },
      "fluid": { "nondimensional": { "ell": 0.1 } },
      "discretization": { "panels": 12 }
    }"#;
    let from_file = r#"{
      "body": { "kind": "polyline", "vertices_csv": "v.csv" },
      "fluid": { "nondimensional": { "ell": 0.1 } },
      "discretization": { "panels": 12 }
    }"#;
    let a = write_config(tmp.path(), "a.json", inline);
    let b = write_config(tmp.path(), "b.json", from_file);
    assert_eq!(run("steady", &a, &tmp.path().join("a")), 0);
    assert_eq!(run("steady", &b, &tmp.path().join("b")), 0);
    let (ra, rb) = (report(&tmp.path().join("a")), report(&tmp.path().join("b")));
    assert_eq!(ra["resistance"], rb["resistance"]);
    assert_eq!(ra["steady_states"], rb["steady_states"]);
}

#[test]
fn dimensional_mode_scales_back() {
    let dim = RunConfig::from_json(
        r#"{
      "body": { "kind": "helix", "radius": 1.0, "pitch": 1.0, "turns": 2.0 },
      "fluid": { "dimensional": { "rho": 2.0, "mu": 0.5, "thickness": 0.03, "length_scale": 0.3, "gravity": 9.0 } },
      "masses": { "total": 0.5, "complementary": 0.1 },
      "discretization": { "panels": 8 }
    }"#,
    )
    .unwrap();
    // same problem in scaled units: ρd³ = 0.054, W = 3.24, Re = 3.888, ℓ = 0.1
    let nd = RunConfig::from_json(
        r#"{
      "body": { "kind": "helix", "radius": 1.0, "pitch": 1.0, "turns": 2.0 },
      "fluid": { "nondimensional": { "ell": 0.1, "reynolds": 3.888 } },
      "masses": { "total": 9.259259259259259, "complementary": 1.8518518518518519 },
      "discretization": { "panels": 8 }
    }"#,
    )
    .unwrap();
    let a = execute(Mode::Steady, &dim).unwrap().report;
    let b = execute(Mode::Steady, &nd).unwrap().report;
    assert!((a.scales.reynolds - 3.888).abs() < 1e-12);
    assert!((a.scales.speed - 3.24).abs() < 1e-12);
    let (sa, sb) = (&a.steady_states.unwrap()[0], &b.steady_states.unwrap()[0]);
    assert!((sa.state.xi - sb.state.xi).norm() <= 1e-12 * sb.state.xi.norm());
    let d = sa.dimensional.as_ref().unwrap();
    assert!((d.xi - sb.state.xi * 3.24).norm() <= 1e-12 * d.xi.norm());
    assert!((d.omega - sb.state.omega * (3.24 / 0.3)).norm() <= 1e-12 * (1.0 + d.omega.norm()));
}

#[test]
fn mode_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let json = RING.replacen('{', r#"{ "mode": "mobility","#, 1);
    let cfg = write_config(tmp.path(), "m.json", &json);
    assert_eq!(run("steady", &cfg, &tmp.path().join("x")), 2);
    assert_eq!(run("mobility", &cfg, &tmp.path().join("y")), 0);
    assert!(report(&tmp.path().join("y")).get("steady_states").is_none());
}
