//! End-to-end checks of the CLI binary: artifacts, exit codes, golden CSV
//! for the zero-data run, and the output-directory override.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_elastoreg")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const ZERO_CFG: &str = "\
mesh.kind = rectangle
mesh.nx = 2
mesh.ny = 2
mesh.dirichlet = left
material.kind = svk
solver.kappa = 1e-2
solver.dt = 1e-3
solver.t_end = 3e-3
experiment.kind = solve
experiment.seed = 42
";

#[test]
fn solve_zero_data_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", ZERO_CFG);
    let status = Command::new(bin())
        .arg("solve")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success(), "exit {status:?}");

    // Dynamic columns all zero, min_det one, schema pinned byte for byte.
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut expected = String::from(
        "# run-csv v1\nt,kinetic,strain,viscous_cum,min_det,korn_ratio,newton_iters\n",
    );
    for n in 0..=3 {
        expected.push_str(&format!(
            "{:.12e},0.000000000000e0,0.000000000000e0,0.000000000000e0,1.000000000000e0,0.000000000000e0,0\n",
            n as f64 * 1e-3
        ));
    }
    assert_eq!(csv, expected);

    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("verdict: COMPLETED"), "summary: {summary}");
}

#[test]
fn config_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "solver.kappa = fast\n");
    let status = Command::new(bin())
        .arg("solve")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Missing schedule for a sweep is also a config error.
    let cfg = write(dir.path(), "sweep.cfg", ZERO_CFG);
    let status = Command::new(bin())
        .arg("sweep-kappa")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn lifespan_hit_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // Strong ramped compression on a coarse mesh crosses quickly.
    let text = "\
mesh.kind = rectangle
mesh.nx = 4
mesh.ny = 4
mesh.dirichlet = left
material.kind = svk
solver.kappa = 1e-2
solver.dt = 5e-3
solver.t_end = 1.5
data.f = ramp:-12.0,0.0,1.5
data.scale = 0.4
experiment.kind = solve
";
    let cfg = write(dir.path(), "hit.cfg", text);
    let status = Command::new(bin())
        .arg("solve")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("LIFESPAN_HIT"), "summary: {summary}");
}

#[test]
fn validate_material_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
mesh.kind = rectangle
mesh.nx = 3
mesh.ny = 3
material.kind = ogden
material.gamma = 2.0
experiment.kind = validate
experiment.samples = 30
";
    let cfg = write(dir.path(), "val.cfg", text);
    let status = Command::new(bin())
        .arg("validate-material")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(dir.path().join("validate.txt")).unwrap();
    for needle in ["energy coercivity", "stress sublinearity", "gradient consistency", "trace inequality"] {
        assert!(report.contains(needle), "missing `{needle}` in: {report}");
    }
}

#[test]
fn lifespan_sweep_writes_fit() {
    let dir = tempfile::tempdir().unwrap();
    // Strong fast ramp on a coarse mesh: every level crosses quickly.
    let text = "\
mesh.kind = rectangle
mesh.nx = 4
mesh.ny = 4
mesh.dirichlet = left
material.kind = svk
solver.kappa = 1e-2
solver.dt = 2.5e-3
solver.t_end = 0.5
data.f = ramp:-40.0,0.0,0.5
experiment.kind = lifespan-sweep
experiment.epsilons = 0.4,0.2,0.1,0.05
";
    let cfg = write(dir.path(), "life.cfg", text);
    let status = Command::new(bin())
        .arg("sweep-lifespan")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("lifespan.csv")).unwrap();
    assert!(csv.starts_with("# lifespan-csv v1\nepsilon,t_max,censored\n"));
    assert_eq!(csv.lines().count(), 2 + 4);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("lifespan fit:"), "summary: {summary}");
}

#[test]
fn convergence_writes_orders() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
material.kind = svk
solver.dt = 1e-3
solver.t_end = 0.01
experiment.kind = convergence
experiment.levels = 4,8
";
    let cfg = write(dir.path(), "conv.cfg", text);
    let status = Command::new(bin())
        .arg("convergence")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(csv.starts_with("# convergence-csv v1\nh,l2_error,order\n"));
    assert_eq!(csv.lines().count(), 2 + 2);
}

#[test]
fn mesh_file_round_trip_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = elastoreg::mesh::Mesh2D::rectangle(
        3,
        2,
        1.0,
        1.0,
        &[elastoreg::mesh::Side::Left],
    )
    .unwrap();
    let mesh_path = dir.path().join("domain.mesh");
    mesh.save(&mesh_path).unwrap();
    let loaded = elastoreg::mesh::Mesh2D::load(&mesh_path).unwrap();
    assert_eq!(mesh.nodes(), loaded.nodes());
    assert_eq!(mesh.triangles(), loaded.triangles());

    let text = format!(
        "mesh.kind = file\nmesh.path = {}\nmaterial.kind = svk\nsolver.dt = 1e-3\nsolver.t_end = 2e-3\nexperiment.kind = solve\n",
        mesh_path.display()
    );
    let cfg = write(dir.path(), "file.cfg", &text);
    let status = Command::new(bin())
        .arg("solve")
        .arg(&cfg)
        .env("ELASTOREG_OUTDIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("run.csv").exists());
}
