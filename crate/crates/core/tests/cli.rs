use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_impact-pricer"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn impact-pricer");
    status.status.code().unwrap_or(-1)
}

fn manifest_without_clock(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

fn assert_repeatable(cmd: &str, config: &str, extra: &[&str]) {
    let cfg = configs().join(config);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(cmd, &cfg, a.path(), extra), 0, "{cmd} {config}");
    assert_eq!(run(cmd, &cfg, b.path(), extra), 0, "{cmd} {config}");
    let mut csvs: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    csvs.sort();
    assert!(!csvs.is_empty(), "{cmd} wrote no tables");
    for name in &csvs {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{cmd}: {name:?} differs between runs");
    }
    assert_eq!(manifest_without_clock(a.path()), manifest_without_clock(b.path()));
}

#[test]
fn deterministic_commands_repeat_byte_for_byte() {
    assert_repeatable("quote", "bachelier_bounds.toml", &[]);
    assert_repeatable("bounds", "bachelier_bounds.toml", &[]);
    assert_repeatable("schedule", "bachelier_bounds.toml", &[]);
    assert_repeatable("pepq", "arbitrage_demo.toml", &[]);
    assert_repeatable("region", "twod_region.toml", &[]);
    assert_repeatable("asymptotics", "asymptotics_demand.toml", &[]);
}

#[test]
fn seeded_simulation_repeats() {
    assert_repeatable("simulate", "bachelier_simulate.toml", &["--paths", "400", "--seed", "11"]);
}

#[test]
fn bad_configs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run("quote", &dir.path().join("missing.toml"), &out, &[]), 2);

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "model = [unterminated\n").unwrap();
    assert_eq!(run("quote", &broken, &out, &[]), 2);

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "model = \"no_such_model\"\n").unwrap();
    assert_eq!(run("bounds", &unknown, &out, &[]), 2);
}

#[test]
fn manifest_hashes_the_config_and_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("arbitrage_demo.toml");
    assert_eq!(run("pepq", &cfg, dir.path(), &[]), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let hash = impact_core::cli::output::sha256_hex(&fs::read(&cfg).unwrap());
    assert_eq!(m["config_sha256"], hash.as_str());
    assert_eq!(m["summary"]["side_A_class"], "sell_arbitrage");
    for name in m["outputs"].as_array().unwrap() {
        assert!(dir.path().join(name.as_str().unwrap()).exists());
    }
}
