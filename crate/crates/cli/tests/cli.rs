use std::path::Path;
use std::process::{Command, Output};

fn digitrade(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_digitrade"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small synthetic world with its config.toml.
fn world() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let o = digitrade(
        &["synth", "--out", "world", "--seed", "3", "--countries", "6", "--firms", "5", "--brands", "8", "--sectors", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    tmp
}

#[test]
fn full_run_then_single_stage() {
    let tmp = world();
    let cfg = "world/config.toml";
    let o = digitrade(&["--config", cfg], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("world/out");
    for f in ["manifest.json", "flows.csv", "eci.csv", "trade_volume.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let before = std::fs::read(out.join("flows.csv")).unwrap();
    let o = digitrade(&["bounds", "--config", cfg], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("flows.csv")).unwrap(), before);
    let o = digitrade(&["--config", cfg, "--stage", "analyze"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn missing_intermediate_exits_one() {
    let tmp = world();
    let o = digitrade(&["analyze", "--config", "world/config.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("flows.csv not found: run allocate first"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = world();
    let cases: [&[&str]; 5] = [
        &["run"],
        &["--config", "world/absent.toml"],
        &["--config", "world/config.toml", "--stage", "nonsense"],
        &["train", "--config", "world/config.toml", "--stage", "cv"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = digitrade(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn mode_flag_overrides_the_config() {
    let tmp = world();
    let o = digitrade(&["--config", "world/config.toml", "--mode", "parent_hq", "--out", "hq"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(tmp.path().join("hq/manifest.json")).unwrap();
    assert!(manifest.contains(r#""mode": "parent_hq""#));
    let o = digitrade(&["--config", "world/config.toml", "--mode", "sideways"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
