use std::path::{Path, PathBuf};

use digitrade::data_model::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Copy of a fixture directory that a test may edit.
fn scratch_copy(name: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture(name)).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
    }
    tmp
}

fn edit(dir: &Path, file: &str, from: &str, to: &str) {
    let p = dir.join(file);
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.contains(from), "{file} lacks {from}");
    std::fs::write(&p, text.replacen(from, to, 1)).unwrap();
}

#[test]
fn two_country_fixture_loads() {
    let ds = load_dataset(&DatasetPaths::from_dir(fixture("two_country"))).unwrap();
    assert_eq!(ds.countries.len(), 2);
    assert_eq!(ds.dyads.len(), 2);
    assert_eq!(ds.brands.len(), 1);
    assert_eq!((ds.first_year, ds.last_year), (2020, 2021));
    assert!(ds.physical.is_none());
    assert!(validate(&ds).is_empty());
    let b = BrandId::from("B1".to_string());
    assert_eq!(ds.revenue.brand_world_revenue(&b, 2021), 6e7);
    assert_eq!(ds.brand_origin(&b).map(|c| c.as_str()), Some("USA"));
}

#[test]
fn negative_revenue_is_rejected() {
    let tmp = scratch_copy("two_country");
    edit(tmp.path(), "revenues.csv", "F1,B1,2021,60000000", "F1,B1,2021,-5");
    let err = load_dataset(&DatasetPaths::from_dir(tmp.path())).unwrap_err();
    assert!(matches!(err, DataError::NegativeValue { value, .. } if value == -5.0), "{err}");
    assert!(err.to_string().contains("negative monetary value"));
}

#[test]
fn revenue_of_unknown_firm_is_rejected() {
    let tmp = scratch_copy("two_country");
    edit(tmp.path(), "revenues.csv", "F1,B1,2021", "F9,B1,2021");
    let err = load_dataset(&DatasetPaths::from_dir(tmp.path())).unwrap_err();
    assert!(matches!(err, DataError::ReferentialIntegrity(_)), "{err}");
}

#[test]
fn missing_column_is_a_schema_error() {
    let tmp = scratch_copy("two_country");
    edit(tmp.path(), "revenues.csv", "revenue_usd", "revenue");
    let err = load_dataset(&DatasetPaths::from_dir(tmp.path())).unwrap_err();
    assert!(matches!(err, DataError::Schema { .. }), "{err}");
}

#[test]
fn physical_trade_is_optional() {
    let ds = load_dataset(&DatasetPaths::from_dir(fixture("subsidiary"))).unwrap();
    assert!(ds.physical.as_ref().is_some_and(|p| !p.entries.is_empty()));
}

#[test]
fn written_dataset_reloads_identically() {
    let ds = load_dataset(&DatasetPaths::from_dir(fixture("subsidiary"))).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let paths = write_dataset(&ds, tmp.path()).unwrap();
    let back = load_dataset(&paths).unwrap();
    assert_eq!(back, ds);
    assert_eq!(dataset_digest(&back), dataset_digest(&ds));
}

#[test]
fn synthetic_worlds_are_valid_and_seeded() {
    let a = synth_world(4, 10, 8, 16, 4, 0.5).unwrap();
    let b = synth_world(4, 10, 8, 16, 4, 0.5).unwrap();
    let c = synth_world(5, 10, 8, 16, 4, 0.5).unwrap();
    assert!(validate(&a).is_empty());
    assert_eq!(dataset_digest(&a), dataset_digest(&b));
    assert_ne!(dataset_digest(&a), dataset_digest(&c));
}
