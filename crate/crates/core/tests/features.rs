use std::path::{Path, PathBuf};

use digitrade::data_model::*;
use digitrade::features::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[derive(serde::Deserialize)]
struct Expected {
    brand_id: String,
    dest: String,
    year: Year,
    feature: String,
    value: f64,
}

/// Values computed independently from the raw CSVs.
#[test]
fn two_country_features_match_hand_values() {
    let dir = fixture("two_country");
    let ds = load_dataset(&DatasetPaths::from_dir(&dir)).unwrap();
    let mut rows = csv::Reader::from_path(dir.join("features_expected.csv")).unwrap();
    let mut seen = 0;
    for r in rows.deserialize::<Expected>() {
        let r = r.unwrap();
        let v = assemble(&ds, &BrandId::from(r.brand_id), &CountryCode::from(r.dest), r.year).unwrap();
        let j = feature_index(&r.feature).unwrap();
        assert!(
            (v.values[j] - r.value).abs() <= 1e-12 * r.value.abs().max(1.0),
            "{}: {} vs {}",
            r.feature,
            v.values[j],
            r.value
        );
        seen += 1;
    }
    assert_eq!(seen, N_FEATURES);
}

#[test]
fn unknown_brand_is_an_error() {
    let ds = load_dataset(&DatasetPaths::from_dir(fixture("two_country"))).unwrap();
    let err = assemble(&ds, &BrandId::from("nope".to_string()), &CountryCode::from("CAN".to_string()), 2021);
    assert!(matches!(err, Err(FeatureError::UnknownBrand(_))));
}

#[test]
fn matrix_rows_equal_single_assemblies() {
    let ds = synth_world(8, 8, 6, 10, 3, 0.3).unwrap();
    let ctx = FeatureContext::new(&ds, 1.0);
    let keys: Vec<(BrandId, CountryCode, Year)> = ds
        .brands
        .keys()
        .take(3)
        .flat_map(|b| ds.countries.keys().map(move |c| (b.clone(), c.clone(), 2020)))
        .collect();
    let m = ctx.assemble_matrix(&keys).unwrap();
    assert_eq!((m.n_rows(), m.n_cols()), (keys.len(), N_FEATURES));
    for (i, (b, c, y)) in keys.iter().enumerate() {
        assert_eq!(m.row(i), ctx.assemble(b, c, *y).unwrap().values.to_vec());
    }
}

#[test]
fn domestic_rows_use_the_distance_floor() {
    let ds = load_dataset(&DatasetPaths::from_dir(fixture("two_country"))).unwrap();
    let usa = CountryCode::from("USA".to_string());
    let b = BrandId::from("B1".to_string());
    let j = feature_index("distance").unwrap();
    let near = FeatureContext::new(&ds, 1.0).assemble(&b, &usa, 2021).unwrap();
    let far = FeatureContext::new(&ds, 50.0).assemble(&b, &usa, 2021).unwrap();
    assert!(near.values[j] < far.values[j]);
    assert_eq!(near.values[feature_index("contiguity").unwrap()], 0.0);
}
