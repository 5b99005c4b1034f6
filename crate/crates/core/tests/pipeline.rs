use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use digitrade::data_model::*;
use digitrade::pipeline::*;
use digitrade::transport::{allocate_year, reassign_to_parent, Solver, DEFAULT_DOMESTIC_FLOOR_KM};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn config(input: &str, out: &Path) -> PipelineConfig {
    PipelineConfig::new(fixture(input), out, 11)
}

fn bytes(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn two_country_run_produces_every_table() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run(&config("two_country", tmp.path())).unwrap();
    let files: BTreeSet<&str> = m.outputs.iter().map(|o| o.file.as_str()).collect();
    for f in [
        "validation_report.csv",
        "features.csv",
        "model.txt",
        "cv_summary.csv",
        "predicted_consumption.csv",
        "harmonized_consumption.csv",
        "allocation_2020.csv",
        "allocation_2021.csv",
        "flows.csv",
        "trade_volume.csv",
        "sector_shares.csv",
        "centrality.csv",
        "decoupling.csv",
        "eci.csv",
        "pci.csv",
        "trade_volume.svg",
    ] {
        assert!(files.contains(f), "missing {f}");
    }
    assert_eq!(m.stages.len(), Stage::ALL.len());
    assert_eq!(m.mode, "subsidiary");
    assert!(m.notes.iter().any(|n| n.starts_with("complexity:")));
    assert_eq!(RunManifest::read(&tmp.path().join(MANIFEST)).unwrap(), m);

    // One cv_report row per fold, as counted in the summary.
    let lines = |f: &str| std::fs::read_to_string(tmp.path().join(f)).unwrap();
    let folds: usize = lines("cv_summary.csv")
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("boosted,"))
        .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
        .sum();
    assert!(folds > 0);
    assert_eq!(lines("cv_report.csv").lines().count() - 1, folds);

    // One exporter: all foreign demand is served from the brand's home.
    let flows = read_flows(&tmp.path().join("flows.csv")).unwrap();
    let pairs: Vec<(Year, &str, &str, f64)> =
        flows.iter().map(|f| (f.year, f.origin.as_str(), f.dest.as_str(), f.value)).collect();
    assert_eq!(pairs, vec![(2020, "USA", "CAN", 2.5e7), (2021, "USA", "CAN", 1.5e7)]);
}

#[test]
fn identical_runs_have_identical_digests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&config("two_country", a.path())).unwrap();
    let mb = run(&config("two_country", b.path())).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.config_digest, mb.config_digest);
    assert_eq!(ma.dataset_digest, mb.dataset_digest);
}

#[test]
fn single_stages_rebuild_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("two_country", tmp.path());
    let full = run(&cfg).unwrap();
    for (file, stage) in [
        ("flows.csv", Stage::Bounds),
        ("trade_volume.csv", Stage::Analyze),
        ("eci.csv", Stage::Complexity),
        ("sector_shares.svg", Stage::Report),
    ] {
        std::fs::remove_file(tmp.path().join(file)).unwrap();
        let m = run_stage(&cfg, stage).unwrap();
        assert_eq!(m.stages.len(), 1);
        assert_eq!(m.digests()[file], full.digests()[file], "{file} differs after re-running {stage}");
    }
    assert_eq!(output_digests(tmp.path()).unwrap(), full.outputs);
}

#[test]
fn missing_intermediates_name_the_producing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("two_country", tmp.path());
    let err = run_stage(&cfg, Stage::Analyze).unwrap_err();
    assert_eq!(err.to_string(), "flows.csv not found: run allocate first");
    assert_eq!(err.exit_code(), 1);
    let err = run_stage(&cfg, Stage::Train).unwrap_err();
    assert!(matches!(err, PipelineError::MissingIntermediate { stage: Stage::Features, .. }), "{err}");
    let err = run_stage(&cfg, Stage::Report).unwrap_err();
    assert!(matches!(err, PipelineError::MissingIntermediate { stage: Stage::Analyze, .. }), "{err}");
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = PipelineConfig::from_toml_str("seed = 1\nbogus = 2\n", tmp.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let mut cfg = config("two_country", tmp.path());
    cfg.seed = None;
    assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
    let cfg = PipelineConfig::new(tmp.path().join("absent"), tmp.path(), 1);
    assert!(matches!(run(&cfg), Err(PipelineError::Config(_))));
}

#[test]
fn parent_mode_exports_only_from_parent_countries() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("subsidiary", tmp.path());
    cfg.allocation.mode = AllocationMode::ParentHq;
    let m = run(&cfg).unwrap();
    assert_eq!(m.mode, "parent_hq");

    let ds = load_dataset(&cfg.paths()).unwrap();
    let parents: BTreeSet<&CountryCode> = ds.firms.values().filter(|f| f.is_parent()).map(|f| &f.country).collect();
    let flows = read_flows(&tmp.path().join("flows.csv")).unwrap();
    assert!(!flows.is_empty());
    assert!(flows.iter().all(|f| parents.contains(&f.origin)));

    // Same cells as allocating the reassigned ledger by hand.
    let consumption = read_consumption(&tmp.path().join("harmonized_consumption.csv")).unwrap();
    let ledger = reassign_to_parent(&ds).unwrap();
    let by_hand = allocate_year(&ds, &ledger, &consumption, ds.last_year, DEFAULT_DOMESTIC_FLOOR_KM, Solver::Exact).unwrap();
    let from_file = read_allocations(&tmp.path().join(format!("allocation_{}.csv", ds.last_year))).unwrap();
    let cells = |a: &std::collections::BTreeMap<BrandId, digitrade::transport::Allocation>| {
        a.iter()
            .flat_map(|(b, x)| x.triplets().map(|(o, d, v)| (b.to_string(), o.to_string(), d.to_string(), v.to_bits())).collect::<Vec<_>>())
            .collect::<BTreeSet<_>>()
    };
    assert_eq!(cells(&by_hand), cells(&from_file));
}

#[test]
fn charts_are_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("two_country", tmp.path());
    run(&cfg).unwrap();
    let first = bytes(tmp.path(), "trade_volume.svg");
    assert!(String::from_utf8(first.clone()).unwrap().starts_with("<svg"));
    run_stage(&cfg, Stage::Report).unwrap();
    assert_eq!(bytes(tmp.path(), "trade_volume.svg"), first);
}

#[test]
fn config_round_trips_through_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("subsidiary", tmp.path());
    cfg.allocation.mode = AllocationMode::ParentHq;
    cfg.model.top_k = 7;
    let back = PipelineConfig::from_toml_str(&cfg.to_toml(), tmp.path()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.digest(), cfg.digest());
}
