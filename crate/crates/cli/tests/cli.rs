use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[experiment.tiny]
algorithm = "scheduled"
regime = "bandit"
policy = "bernoulli_clairvoyant"
capacities = [4]
horizons = [64, 128, 256, 1024]
seeds = 3
base_seed = 5

[experiment.tiny.instance]
actions = 3
delay = { kind = "fixed", d = 6 }
loss = { kind = "stochastic_gap", gap = 0.3 }
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_delaysched"));
    c.env_remove("DELAYSCHED_OUT").env("RUST_LOG", "warn");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let run = bin()
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seeds",
            "2",
            "--threads",
            "1",
        ])
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("tiny_T1024_C4"), "{stdout}");
    assert!(stdout.contains("scaling tiny C=4: slope"), "{stdout}");
    for f in [
        "summary.csv",
        "checkpoints.csv",
        "timing.csv",
        "config.toml",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(
        summary.lines().skip(2).all(|l| l.contains(",2,")),
        "{summary}"
    );

    let report = bin()
        .args(["report", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(report.status.success());
    assert_eq!(String::from_utf8_lossy(&report.stdout), stdout);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("from_env");
    let run = bin()
        .env("DELAYSCHED_OUT", &out)
        .args(["run", cfg.to_str().unwrap(), "--trace", "--seeds", "1"])
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(out.join("summary.csv").exists());
    assert!(out.join("trace_tiny_T64_C4_0.csv").exists());
    assert!(out.join("occupancy_tiny_T64_C4_0.csv").exists());
}

#[test]
fn invalid_config_fails_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(
        "policy = \"bernoulli_clairvoyant\"",
        "policy = \"bernoulli_clairvoyant\"\nrates = \"ncp_bandit\"",
    );
    let cfg = write_config(dir.path(), &bad);
    let run = bin()
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("experiment.tiny.rates"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_results_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let report = bin()
        .args(["report", dir.path().join("nope").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!report.status.success());
}
