use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hrelab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hrelab"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("out/manifest.txt")).unwrap()
}

const ZERO: &str = r#"
command = "series"
seed = 1
[model]
kind = "iid"
law = { law = "point_mass", value = 0.0 }
[params]
n_max = 25
replicas = 200
"#;

#[test]
fn zero_model_series_is_all_zeros() {
    let dir = scratch("zero");
    let out = run(&dir, ZERO, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/series_eps1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("N,p_hat,ci_low,ci_high,cumulative,oracle"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 25);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!((cols[1], cols[2], cols[4], cols[5]), ("0", "0", "0", "0"));
    }
    let m = manifest(&dir);
    assert!(m.lines().all(|l| l.contains('=')));
    assert!(m.contains("seed=1\n") && m.contains("status=PASS"));
}

#[test]
fn heyde_oracle_trends_to_variance() {
    let dir = scratch("heyde");
    let cfg = r#"
command = "heyde"
seed = 4
[model]
kind = "iid"
law = { law = "gaussian", mean = 0.0, sd = 1.0 }
[params]
replicas = 1000
"#;
    let out = run(&dir, cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/heyde.csv")).unwrap();
    let oracle: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(oracle.len(), 4);
    assert!(oracle.windows(2).all(|w| (1.0 - w[1]).abs() < (1.0 - w[0]).abs()));
    assert!((oracle[3] - 1.0).abs() < 0.01);
}

#[test]
fn missing_seed_is_a_configuration_error() {
    let dir = scratch("noseed");
    let out = run(&dir, &ZERO.replace("seed = 1", ""), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`seed`"));
    assert!(!dir.join("out/manifest.txt").exists());
    // the flag supplies it
    let out = run(&dir, &ZERO.replace("seed = 1", ""), &["--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(manifest(&dir).contains("seed=9\n"));
}

#[test]
fn malformed_values_exit_two() {
    let dir = scratch("malformed");
    assert_eq!(run(&dir, &ZERO.replace("n_max = 25", "n_max = -3"), &[]).status.code(), Some(2));
    assert_eq!(run(&dir, &ZERO.replace("replicas = 200", "replicas = 0"), &[]).status.code(), Some(2));
    assert_eq!(run(&dir, "seed = 1\ncommand = \"series\"", &[]).status.code(), Some(2));
}

#[test]
fn violated_construction_exits_one_with_manifest() {
    let dir = scratch("violation");
    // eight identical coins: only the first is a valid difference
    let cfg = r#"
command = "select"
seed = 1
[model]
kind = "perturbed"
base = { kind = "iid", law = { law = "point_mass", value = 1.0 } }
scales = [0.0, 0.0, 0.0]
[params]
n_max = 3
stages = 2
"#;
    let out = run(&dir, cfg, &[]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(manifest(&dir).contains("status=FAIL"));
}

#[test]
fn command_argument_overrides_config() {
    let dir = scratch("override");
    let cfg = ZERO.replace("command = \"series\"", "command = \"dyadic\"");
    let out = run(&dir, &cfg, &["maxterm"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("out/maxterm.csv").exists());
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let a = scratch("workers-a");
    let b = scratch("workers-b");
    let cfg = ZERO.replace(
        "law = { law = \"point_mass\", value = 0.0 }",
        "law = { law = \"laplace\", scale = 1.0 }",
    );
    assert_eq!(run(&a, &cfg, &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(run(&b, &cfg, &["--workers", "4"]).status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("out/series_eps1.csv")).unwrap(),
        fs::read(b.join("out/series_eps1.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = Vec::new();
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = hre_cli::ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        seen.push(cfg.command.unwrap());
    }
    seen.sort_by_key(|c| c.name());
    seen.dedup();
    assert_eq!(seen.len(), 11);
}
