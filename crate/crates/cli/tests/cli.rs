use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hymlab(config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("experiment.conf");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hymlab"))
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env("HYMLAB_THREADS", "1")
        .output()
        .unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const SPLIT_RAY: &str = "\
scenario = slope-ray
bundle.splitting = 1, -1
filtration.stages = 1,2; 1
filtration.weights = 1, 0
numeric.ts = 0.25, 0.5, 1, 2, 4
";

#[test]
fn slope_ray_on_split_bundle() {
    let dir = TempDir::new().unwrap();
    let out = hymlab(SPLIT_RAY, dir.path(), &["--grid", "16x32"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["schema_version"], "hymlab.report/1");
    assert_eq!(r["scenario"], "slope-ray");
    assert_eq!(r["passed"], true);
    let c = r["results"]["slope_coefficient"].as_f64().unwrap();
    assert!((c + 2.0 * std::f64::consts::PI).abs() < 1e-4);
    assert!(r["results"]["max_relative_residual"].as_f64().unwrap() <= 1e-2);
    assert_eq!(r["results"]["destabilizer"]["stage"], 2);
    assert_eq!(r["config"]["geometry.n_radial"], "16");

    let csv = fs::read_to_string(dir.path().join("out/ray_energy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,m_direct,m_closed,residual"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn reports_are_deterministic() {
    let config = "\
scenario = slope-ray
seed = 5
bundle.splitting = 1, -1
filtration.stages = 1,2; 1
filtration.weights = 1, 0
metric = twisted
metric.amplitude = 0.4
numeric.ts = 0.5, 1
numeric.path_steps = 8
";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let out = hymlab(config, d.path(), &["--grid", "12x24"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = fs::read(a.path().join("out/report.json")).unwrap();
    let rb = fs::read(b.path().join("out/report.json")).unwrap();
    assert_eq!(ra, rb);
    let other = TempDir::new().unwrap();
    hymlab(config, other.path(), &["--grid", "12x24", "--seed", "6"]);
    assert_ne!(fs::read(other.path().join("out/report.json")).unwrap(), ra);
}

#[test]
fn missing_weights_exit_two() {
    let dir = TempDir::new().unwrap();
    let config = "scenario = slope-ray\nbundle.splitting = 1, -1\nfiltration.stages = 1,2; 1\n";
    let out = hymlab(config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("filtration.weights"));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn config_errors_exit_two() {
    for (config, key) in [
        ("scenario = nope\n", "scenario"),
        ("scenario = flow\nbundle.splitting = 1, x\n", "bundle.splitting"),
        ("scenario = flow\nbundle.splitting = 1\nflow.dt = 0\n", "flow.dt"),
        ("scenario = flow\nbundle.splitting = 1\ngeometry.n_radial = 2\n", "grid"),
    ] {
        let dir = TempDir::new().unwrap();
        let out = hymlab(config, dir.path(), &[]);
        assert_eq!(out.status.code(), Some(2), "{config}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(key), "{config}");
    }
    let dir = TempDir::new().unwrap();
    let out = hymlab(SPLIT_RAY, dir.path(), &["--grid", "16"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_one() {
    let dir = TempDir::new().unwrap();
    // Converging on an unstable bundle is impossible.
    let config = "\
scenario = flow
bundle.splitting = 1, -1
flow.max_steps = 3
flow.expect = converge
";
    let out = hymlab(config, dir.path(), &["--grid", "16x32"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["passed"], false);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL converged"));
    let csv = fs::read_to_string(dir.path().join("out/flow.csv")).unwrap();
    assert!(csv.starts_with("step,time,he_residual,m_value\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn flow_at_fixed_point_writes_single_record() {
    let dir = TempDir::new().unwrap();
    let config = "\
scenario = flow
bundle.splitting = 1, 1
flow.expect = converge
";
    let out = hymlab(config, dir.path(), &["--grid", "24x64"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(dir.path())["results"]["steps"], 0);
}

#[test]
fn csv_can_be_disabled() {
    let dir = TempDir::new().unwrap();
    let config = format!("{SPLIT_RAY}output.csv = false\noutput.report = ray.json\n");
    let out = hymlab(&config, dir.path(), &["--grid", "12x24"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out/ray.json").exists());
    assert!(!dir.path().join("out/ray_energy.csv").exists());
}

#[test]
fn verify_lemmas_small_run() {
    let dir = TempDir::new().unwrap();
    let config = "scenario = verify-lemmas\nseed = 42\nlemmas.instances = 2000\n";
    let out = hymlab(config, dir.path(), &["--grid", "16x32"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["results"]["witness"]["mismatches"], 0);
    assert_eq!(r["results"]["block_convergence"]["verdict"], "confirmed");
}

#[test]
fn extract_recovers_three_stages() {
    let dir = TempDir::new().unwrap();
    let config = "\
scenario = extract
seed = 3
bundle.splitting = 2, 0, -1
filtration.stages = 1,2,3; 1,3; 1
filtration.weights = 1.5, 0.5, -1
metric = twisted
metric.amplitude = 0.5
numeric.ts = 1, 2
";
    let out = hymlab(config, dir.path(), &["--grid", "16x32"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["results"]["stages"][0]["indices"], serde_json::json!([1, 3]));
    assert_eq!(r["results"]["stages"][1]["indices"], serde_json::json!([1]));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        hymlab::load(&text, &hymlab::Overrides::default())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
