use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toric-balanced"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn out_dir() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().to_string_lossy().into_owned();
    (dir, s)
}

fn read(dir: &str, name: &str) -> String {
    std::fs::read_to_string(PathBuf::from(dir).join(name)).unwrap()
}

#[test]
fn lattice_segment_has_exact_prediction() {
    let (_d, dir) = out_dir();
    let out = run(&["lattice", "--polytope", &fixture("cp1.json"), "--k", "1..5", "--out", &dir]);
    assert_eq!(code(&out), 0);
    let csv = read(&dir, "lattice.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for (i, row) in rows.iter().enumerate() {
        let k = i + 1;
        assert_eq!(*row, format!("{k},{},{},0", k + 1, k + 1));
    }
}

#[test]
fn lattice_counts_from_files() {
    let out = run(&["lattice", "--polytope", &fixture("cp2.json"), "--k", "3"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\n3,10,"));
    let out = run(&["lattice", "--polytope", &fixture("f1.json"), "--k", "2"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\n2,12,11,1"));
}

#[test]
fn plain_segment_solve_converges() {
    let (_d, dir) = out_dir();
    let out = run(&[
        "solve", "--polytope", &fixture("cp1.json"), "--k", "8", "--mode", "plain", "--tol", "1e-10", "--out", &dir,
    ]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "summary.json")).unwrap();
    let solve = &summary["solves"][0];
    assert_eq!(solve["converged"], true);
    assert!(solve["residual"].as_f64().unwrap() < 1e-10);
    assert!(read(&dir, "run_k8.csv").starts_with("iter,residual,v_1,"));
    assert_eq!(read(&dir, "weights_k8.csv").lines().count(), 2 + 9);
}

#[test]
fn obstructed_plain_solve_exits_two() {
    let (_d, dir) = out_dir();
    let out = run(&["solve", "--polytope", "f1", "--k", "6", "--mode", "plain", "--max-iter", "150", "--out", &dir]);
    assert_eq!(code(&out), 2);
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "summary.json")).unwrap();
    assert_eq!(summary["solves"][0]["converged"], false);
    assert!(summary["solves"][0]["residual"].as_f64().unwrap() > 1e-4);
}

#[test]
fn configuration_errors_exit_one() {
    assert_eq!(code(&run(&["solve", "--polytope", "missing.json"])), 1);
    assert_eq!(code(&run(&["solve", "--polytope", "cp1", "--k", "0"])), 1);
    assert_eq!(code(&run(&["solve", "--polytope", "cp1", "--mode", "sideways"])), 1);
    assert_eq!(code(&run(&["solve", "--polytope", "cp1", "--mode", "fixed-sigma"])), 1);
    assert_eq!(code(&run(&["solve", "--bogus-flag"])), 1);
    assert_eq!(code(&run(&["b1-check", "--polytope", "cp1", "--k", "8"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dim":1,"facets":[{"normal":[2],"offset":0},{"normal":[-1],"offset":1}]}"#).unwrap();
    assert_eq!(code(&run(&["lattice", "--polytope", bad.to_str().unwrap()])), 1);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"polytope": "cp1", "colour": "red"}"#).unwrap();
    assert_eq!(code(&run(&["lattice", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn config_file_merges_under_flags() {
    let (_d, dir) = out_dir();
    let cfg = PathBuf::from(&dir).join("run.json");
    std::fs::write(&cfg, r#"{"polytope": "cp2", "k": "1..4", "seed": 3}"#).unwrap();
    let out = run(&["lattice", "--config", cfg.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 2);
    assert!(stdout.contains("\n2,6,"));
}

#[test]
fn reruns_are_byte_identical() {
    let (_a, a) = out_dir();
    let (_b, b) = out_dir();
    for dir in [&a, &b] {
        let out = run(&[
            "solve", "--polytope", "f1", "--k", "3", "--mode", "auto-sigma", "--tol", "1e-8", "--seed", "7", "--threads",
            "1", "--out", dir,
        ]);
        assert_eq!(code(&out), 0);
    }
    for name in ["run_k3.csv", "weights_k3.csv", "weights.csv", "summary.json"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn symmetric_weights_table_is_zero() {
    let (_d, dir) = out_dir();
    let out = run(&["weights", "--polytope", "cp1", "--k", "2..4", "--tol", "1e-10", "--out", &dir]);
    assert_eq!(code(&out), 0);
    let csv = read(&dir, "weights_table.csv");
    for row in csv.lines().skip(1) {
        let kv: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(kv.abs() < 1e-8, "{row}");
    }
}

#[test]
fn round_segment_density_fit() {
    let (_d, dir) = out_dir();
    let out = run(&["bergman-fit", "--potential", "round-cp1", "--k", "8..16..8", "--out", &dir]);
    assert_eq!(code(&out), 0);
    let csv = read(&dir, "bergman_fit.csv");
    for row in csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        let k: f64 = f[0].parse().unwrap();
        for x in &f[1..3] {
            assert!((x.parse::<f64>().unwrap() - (k + 1.0)).abs() < 1e-8, "{row}");
        }
    }
}

#[test]
fn segment_b1_is_exact() {
    let out = run(&["b1-check", "--polytope", "cp1", "--k", "4..8..4"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4,0e0,true"), "{stdout}");
    assert!(stdout.contains("8,0e0,true"), "{stdout}");
}
