//! Training-set cleaning: drop small brands and brands whose consumption
//! pattern disagrees with brands from the same parent country.

use std::collections::{BTreeMap, BTreeSet};

use super::BoostError;
use crate::data_model::{BrandId, CountryCode, Dataset, Provenance, Year};
use crate::stats::pearson;

pub const MIN_BRAND_REVENUE: f64 = 1e7;
pub const MIN_PEER_CORRELATION: f64 = 0.3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CleaningReport {
    pub kept: BTreeSet<BrandId>,
    pub removed_small: Vec<BrandId>,
    /// Removed brands with their mean peer correlation.
    pub removed_outliers: Vec<(BrandId, f64)>,
    /// Mean peer correlation of every brand that had at least one peer with
    /// a defined correlation.
    pub peer_correlation: BTreeMap<BrandId, f64>,
}

/// Brands with observed consumption in `year` that pass both filters.
/// A brand without any comparable co-national peer passes the correlation
/// filter.
pub fn clean_training_set(ds: &Dataset, year: Year) -> Result<CleaningReport, BoostError> {
    clean_training_set_with(ds, year, MIN_BRAND_REVENUE, MIN_PEER_CORRELATION)
}

/// [`clean_training_set`] with explicit thresholds.
pub fn clean_training_set_with(
    ds: &Dataset,
    year: Year,
    min_revenue: f64,
    min_correlation: f64,
) -> Result<CleaningReport, BoostError> {
    let observed: Vec<(&BrandId, &CountryCode, f64)> = ds
        .consumption
        .entries
        .iter()
        .filter(|((_, _, y), e)| *y == year && e.provenance == Provenance::Observed)
        .map(|((b, c, _), e)| (b, c, e.value))
        .collect();
    if observed.is_empty() {
        return Err(BoostError::NoObservedData(year));
    }
    let countries: BTreeSet<&CountryCode> = observed.iter().map(|(_, c, _)| *c).collect();
    let col: BTreeMap<&CountryCode, usize> = countries.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut vectors: BTreeMap<&BrandId, Vec<f64>> = BTreeMap::new();
    for (b, c, v) in &observed {
        vectors.entry(*b).or_insert_with(|| vec![0.0; countries.len()])[col[c]] = *v;
    }

    let mut report = CleaningReport::default();
    let mut large: Vec<&BrandId> = Vec::new();
    for b in vectors.keys() {
        if ds.revenue.brand_world_revenue(b, year) < min_revenue {
            report.removed_small.push((*b).clone());
        } else {
            large.push(b);
        }
    }

    let origin = |b: &BrandId| ds.brand_origin(b).cloned();
    for b in &large {
        let home = origin(b);
        let rs: Vec<f64> = large
            .iter()
            .filter(|p| *p != b && origin(p) == home)
            .filter_map(|p| pearson(&vectors[b], &vectors[p]))
            .collect();
        if rs.is_empty() {
            report.kept.insert((*b).clone());
            continue;
        }
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        report.peer_correlation.insert((*b).clone(), mean);
        if mean < min_correlation {
            report.removed_outliers.push(((*b).clone(), mean));
        } else {
            report.kept.insert((*b).clone());
        }
    }
    if report.kept.is_empty() {
        return Err(BoostError::EmptyCleanSet);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::synth_world;

    /// Three brands of one parent country observed in four countries.
    fn fixture(rows: [[f64; 4]; 3], revenue: [f64; 3]) -> Dataset {
        let mut ds = synth_world(1, 4, 2, 3, 2, 0.0).unwrap();
        let year = ds.last_year;
        let parent = ds.firms.values().find(|f| f.is_parent()).unwrap().firm_id.clone();
        for b in ds.brands.values_mut() {
            b.parent_firm_id = parent.clone();
        }
        let brands: Vec<BrandId> = ds.brands.keys().cloned().collect();
        let countries: Vec<CountryCode> = ds.countries.keys().cloned().collect();
        ds.consumption.entries.clear();
        for (b, row) in brands.iter().zip(rows) {
            for (c, v) in countries.iter().zip(row) {
                ds.consumption.insert(b.clone(), c.clone(), year, v, Provenance::Observed);
            }
        }
        ds.revenue.entries.retain(|(_, _, y), _| *y == year);
        for (b, r) in brands.iter().zip(revenue) {
            let keys: Vec<_> = ds.revenue.entries.keys().filter(|(_, bb, _)| bb == b).cloned().collect();
            let n = keys.len() as f64;
            for k in keys {
                ds.revenue.entries.insert(k, r / n);
            }
        }
        ds
    }

    #[test]
    fn small_brand_is_removed() {
        let ds = fixture([[1.0, 2.0, 3.0, 4.0]; 3], [9.9e6, 2e7, 2e7]);
        let r = clean_training_set(&ds, ds.last_year).unwrap();
        assert_eq!(r.removed_small.len(), 1);
        assert_eq!(r.kept.len(), 2);
    }

    #[test]
    fn identical_peers_are_kept() {
        let ds = fixture([[1.0, 2.0, 3.0, 4.0]; 3], [2e7; 3]);
        let r = clean_training_set(&ds, ds.last_year).unwrap();
        assert_eq!(r.kept.len(), 3);
        assert!(r.peer_correlation.values().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn orthogonal_brand_is_removed() {
        // (6,4,4,6) is orthogonal to (1,2,3,4) after centering.
        let ds = fixture(
            [[1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.1], [6.0, 4.0, 4.0, 6.0]],
            [2e7; 3],
        );
        let r = clean_training_set(&ds, ds.last_year).unwrap();
        assert_eq!(r.removed_outliers.len(), 1);
        let oracle = pearson(&[1.0, 2.0, 3.0, 4.0], &[6.0, 4.0, 4.0, 6.0]).unwrap();
        assert!(oracle.abs() < 1e-12);
        assert_eq!(r.kept.len(), 2);
    }

    #[test]
    fn all_small_is_an_error() {
        let ds = fixture([[1.0, 2.0, 3.0, 4.0]; 3], [1.0; 3]);
        assert!(matches!(clean_training_set(&ds, ds.last_year), Err(BoostError::EmptyCleanSet)));
    }
}
