use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_cyflab");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Runs the binary inside `dir`, so relative output directories land there.
fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

const ELLIPTIC: &str = r#"{
  "schema": 1,
  "family": {"kind": "universal_elliptic", "base": {"samples": [[0, 1], [0, 2]]}},
  "solver": {"grid_n": 16, "tol": 1e-11, "max_iters": 50, "damping_floor": 1e-6},
  "outputs": {"dir": "out", "formats": ["json", "csv"]},
  "suites": ["identities"]
}"#;

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ELLIPTIC.replace("\"tol\": 1e-11", "\"tol\": 0"),
        ELLIPTIC.replace("\"schema\": 1,", "\"schema\": 1, \"extra\": true,"),
        ELLIPTIC.replace("\"schema\": 1", "\"schema\": 2"),
        ELLIPTIC.replace("\"grid_n\": 16", "\"grid_n\": 15"),
        ELLIPTIC.replace("\"identities\"", "\"nonsense\""),
        ELLIPTIC.replace("[0, 2]", "[0, -1]"),
    ];
    for text in cases {
        let cfg = write_config(dir.path(), &text);
        let o = run(dir.path(), &["verify", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{text}\n{}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = write_config(dir.path(), ELLIPTIC);
    let o = run(dir.path(), &["verify", "--config", cfg.to_str().unwrap(), "--suite", "nonsense"]);
    assert_eq!(code(&o), 2);
    let o = run(dir.path(), &["green", "--config", "missing.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn manufactured_fiber_is_recovered() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["solve-fiber", "--config", config("manufactured.json").to_str().unwrap(), "--out", "fiber"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("fiber/fiber.json"));
    assert!(report["manufactured_error"].as_f64().unwrap() < 1e-10);
    let (header, rows) = csv_rows(&dir.path().join("fiber/phi.csv"));
    assert_eq!(header, ["xi_0", "xi_1", "phi"]);
    assert_eq!(rows.len(), 64 * 64);

    // an unreachable recovery tolerance is an assertion failure
    let text = std::fs::read_to_string(config("manufactured.json")).unwrap().replace("\"grid_n\": 64", "\"grid_n\": 16");
    let cfg = write_config(dir.path(), &text.replace("\"tolerance\": 1e-10", "\"tolerance\": 1e-300"));
    let o = run(dir.path(), &["solve-fiber", "--config", cfg.to_str().unwrap(), "--out", "strict"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn product_fiber_has_zero_potential() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["solve-fiber", "--config", config("product.json").to_str().unwrap(), "--out", "f"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&dir.path().join("f/fiber.json"))["phi_sup"].as_f64().unwrap(), 0.0);
}

#[test]
fn elliptic_family_report() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["run-family", "--config", config("elliptic.json").to_str().unwrap(), "--out", "fam", "--grid", "16"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("fam/family.csv"));
    assert_eq!(
        header,
        ["s_re", "s_im", "direct_image", "lower_bound", "theta_E", "wp", "c_min", "c_max", "pde_residual_sup", "K", "combined_min_eig"]
    );
    // direct image density 1/(Im s)² at s = i, 0.3 + 0.8i, 2i
    for (row, want) in rows.iter().zip([1.0, 1.5625, 0.25]) {
        assert!((row[2] - want).abs() < 1e-6 * want, "{row:?}");
        assert!(row[2] - row[3] >= -1e-6);
        assert!(row[10] > 0.0);
    }
    let json = read_json(&dir.path().join("fam/family.json"));
    assert_eq!(json["provenance"]["grid_n"], 16);
    assert_eq!(json["provenance"]["seed"], 7);
    assert!(json["provenance"]["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn product_family_is_flat() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["run-family", "--config", config("product.json").to_str().unwrap(), "--out", "fam"]);
    assert_eq!(code(&o), 0);
    let (_, rows) = csv_rows(&dir.path().join("fam/family.csv"));
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row[4].abs() <= 1e-9 && row[5].abs() <= 1e-9, "{row:?}");
    }
}

#[test]
fn reports_do_not_depend_on_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = config("elliptic.json");
    for (threads, out) in [("1", "a"), ("3", "b"), ("0", "c")] {
        let o = run(dir.path(), &["run-family", "--config", cfg.to_str().unwrap(), "--grid", "16", "--threads", threads, "--out", out]);
        assert_eq!(code(&o), 0);
    }
    for file in ["family.json", "family.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        for other in ["b", "c"] {
            assert!(a == std::fs::read(dir.path().join(other).join(file)).unwrap(), "{file} differs in {other}");
        }
    }
}

#[test]
fn overrides_enter_the_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), ELLIPTIC);
    let hash = |args: &[&str]| {
        let mut all = vec!["run-family", "--config", cfg.to_str().unwrap(), "--out", "o"];
        all.extend_from_slice(args);
        assert_eq!(code(&run(dir.path(), &all)), 0);
        read_json(&dir.path().join("o/family.json"))["provenance"]["config_sha256"].as_str().unwrap().to_string()
    };
    let base = hash(&[]);
    assert_eq!(base, hash(&["--threads", "2"]));
    assert_ne!(base, hash(&["--grid", "8"]));
    assert_ne!(base, hash(&["--fd-step", "5e-4"]));
}

#[test]
fn identities_suite_uses_the_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), ELLIPTIC);
    let o = run(dir.path(), &["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("[identities] PASS")).count() >= 7, "{stdout}");
    let report = read_json(&dir.path().join("out/verify_identities.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["table"][0]["seed"], 7);
}

#[test]
fn product_and_green_suites_pass() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify", "--config", config("product.json").to_str().unwrap(), "--suite", "product"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    let o = run(dir.path(), &["green", "--config", config("elliptic.json").to_str().unwrap(), "--grid", "16"]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert!(row["reproducing_residual"].as_f64().unwrap() < 1e-9);
        assert!(row["bound"]["k"].as_f64().unwrap() > 0.0);
    }
    assert!(dir.path().join("out/elliptic/green.json").exists());
}

#[test]
fn epsilon_suite_emits_its_table() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify", "--config", config("perturbed.json").to_str().unwrap(), "--suite", "epsilon", "--grid", "32"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = read_json(&dir.path().join("out/perturbed/verify_epsilon.json"));
    let rows = report["table"]["path"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(report["table"]["transport_integrals"].as_array().unwrap().len(), 6);
}

#[test]
fn numerical_failure_keeps_completed_rows() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(config("perturbed.json")).unwrap();
    let text = text
        .replace(
            r#""rectangle": {"re": [-0.4, 0.2], "im": [0.7, 1.3], "nx": 5, "ny": 5}"#,
            r#""samples": [[-0.9, 1.0], [0.2, 0.7]]"#,
        )
    .replace("\"max_iters\": 50", "\"max_iters\": 4");
    let cfg = write_config(dir.path(), &text);
    let o = run(dir.path(), &["run-family", "--config", cfg.to_str().unwrap(), "--out", "fam"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv_rows(&dir.path().join("fam/family.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][..2], &[-0.9, 1.0]);
}
