use digitrade::complexity::*;

/// Five countries with a nested physical export structure: country i
/// exports products 0..5−i, so c0 is the most diverse.
fn nested_physical() -> OutputMatrix {
    let mut cells = Vec::new();
    for i in 0..5usize {
        for j in 0..5 - i {
            cells.push((format!("c{i}"), format!("{PHYSICAL_PREFIX}{j:04}"), 10.0 + (i * 7 + j * 3) as f64));
        }
    }
    OutputMatrix::from_cells(cells.iter().map(|(c, a, v)| (c.as_str(), a.as_str(), *v)))
}

fn rank_of(scores: &ComplexityScores, country: &str) -> usize {
    let i = scores.countries.iter().position(|c| c == country).unwrap();
    scores.eci.iter().filter(|v| **v > scores.eci[i]).count()
}

#[test]
fn zero_digital_columns_leave_eci_unchanged() {
    let phys = nested_physical();
    let cells: Vec<(String, String, f64)> = phys
        .countries
        .iter()
        .flat_map(|c| ["Cloud Computing", "Cybersecurity"].map(|s| (c.clone(), format!("{DIGITAL_PREFIX}{s}"), 0.0)))
        .collect();
    let digital = OutputMatrix::from_cells(cells.iter().map(|(c, a, v)| (c.as_str(), a.as_str(), *v)));
    let merged = merge_digital(&phys, &digital).unwrap();
    assert_eq!(merged.activities.len(), phys.activities.len() + 2);
    let (_, a) = complexity_of(&phys).unwrap();
    let (_, b) = complexity_of(&merged).unwrap();
    assert_eq!(a.eci, b.eci);
    assert_eq!(a.pci, b.pci);
}

#[test]
fn digital_only_exporter_gains_diversity() {
    let phys = nested_physical();
    let digital = OutputMatrix::from_cells([("c9", "digital:Cloud Computing", 50.0)]);
    let merged = merge_digital(&phys, &digital).unwrap();
    let sm = binarize(&rca(&merged).unwrap()).unwrap();
    let i = sm.countries.iter().position(|c| c == "c9").unwrap();
    assert!(sm.diversity()[i] >= 1.0);
}

#[test]
fn digital_specialist_climbs_the_ranking() {
    let phys = nested_physical();
    let (_, before) = complexity_of(&phys).unwrap();
    // c3 leads three digital sectors while keeping its physical specialties.
    let mut cells = Vec::new();
    for c in &phys.countries {
        for s in ["Cloud Computing", "Cybersecurity", "Online Ads"] {
            let v = if c == "c3" { 20.0 } else { 1.0 };
            cells.push((c.clone(), format!("{DIGITAL_PREFIX}{s}"), v));
        }
    }
    let digital = OutputMatrix::from_cells(cells.iter().map(|(c, a, v)| (c.as_str(), a.as_str(), *v)));
    let (_, after) = complexity_of(&merge_digital(&phys, &digital).unwrap()).unwrap();
    assert!(rank_of(&after, "c3") < rank_of(&before, "c3"));
}

#[test]
fn grand_scaling_is_invisible() {
    let phys = nested_physical();
    let (sm, s) = complexity_of(&phys).unwrap();
    // Powers of two scale every intermediate exactly.
    let r = rca(&phys).unwrap();
    assert_eq!(rca(&phys.scaled(8.0)).unwrap(), r);
    for k in [8.0, 3.7, 1e-4, 2.5e6] {
        let scaled = phys.scaled(k);
        let r2 = rca(&scaled).unwrap();
        for (a, b) in r.values.iter().zip(&r2.values) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let (sm2, s2) = complexity_of(&scaled).unwrap();
        assert_eq!(sm2, sm);
        assert_eq!(s2, s);
    }
}

#[test]
fn collision_of_activity_labels_is_rejected() {
    let a = OutputMatrix::from_cells([("c0", "x", 1.0)]);
    assert!(matches!(merge_digital(&a, &a), Err(ComplexityError::CountryMismatch(_))));
}
