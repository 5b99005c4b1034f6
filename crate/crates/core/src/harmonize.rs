//! Rescales consumption so that each brand's world total matches its
//! reported revenue, optionally also matching destination totals by
//! iterative proportional fitting.

use std::collections::{BTreeMap, BTreeSet};

use crate::data_model::{BrandId, ConsumptionMatrix, CountryCode, Dataset, Provenance, Year};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HarmonizeError {
    #[error("negative target {value} for {what}")]
    NegativeTarget { what: String, value: f64 },
    #[error("negative consumption {value} for brand {brand}, {dest}, {year}")]
    NegativeValue {
        brand: BrandId,
        dest: CountryCode,
        year: Year,
        value: f64,
    },
    #[error("sector {sector} in {year}: total {sector_total} differs from brand sum {brand_sum}")]
    InconsistentSector {
        sector: String,
        year: Year,
        sector_total: f64,
        brand_sum: f64,
    },
    #[error("brand {brand} has target {target} in {year} but no positive consumption to scale")]
    NoMass { brand: BrandId, year: Year, target: f64 },
    #[error("destination {dest} has target {target} in {year} but no positive consumption to scale")]
    NoDestinationMass { dest: CountryCode, year: Year, target: f64 },
    #[error("brand {brand} in {year}: frozen observed total {observed} exceeds target {target}")]
    ObservedExceedsTarget {
        brand: BrandId,
        year: Year,
        observed: f64,
        target: f64,
    },
    #[error("brand and destination targets for {year} sum to {brands} and {dests}")]
    InconsistentMargins { year: Year, brands: f64, dests: f64 },
    #[error("no convergence after {iterations} iterations (max relative violation {violation:e})")]
    NonConvergence { iterations: usize, violation: f64 },
}

/// Per-brand and per-sector world totals in USD by year.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarmonizationTargets {
    pub brand: BTreeMap<(BrandId, Year), f64>,
    pub sector: BTreeMap<(String, Year), f64>,
}

impl HarmonizationTargets {
    /// Checks that every sector total equals the sum of its brands' totals
    /// within 1e-6 relative.
    pub fn new(
        brand: BTreeMap<(BrandId, Year), f64>,
        sector: BTreeMap<(String, Year), f64>,
        brand_sector: &BTreeMap<BrandId, String>,
    ) -> Result<Self, HarmonizeError> {
        for ((b, y), v) in &brand {
            if !(*v >= 0.0) {
                return Err(HarmonizeError::NegativeTarget {
                    what: format!("brand {b} in {y}"),
                    value: *v,
                });
            }
        }
        let mut sums: BTreeMap<(String, Year), f64> = BTreeMap::new();
        for ((b, y), v) in &brand {
            if let Some(s) = brand_sector.get(b) {
                *sums.entry((s.clone(), *y)).or_insert(0.0) += v;
            }
        }
        let keys: BTreeSet<&(String, Year)> = sector.keys().chain(sums.keys()).collect();
        for k in keys {
            let total = sector.get(k).copied().unwrap_or(0.0);
            let sum = sums.get(k).copied().unwrap_or(0.0);
            if !(total >= 0.0) {
                return Err(HarmonizeError::NegativeTarget {
                    what: format!("sector {} in {}", k.0, k.1),
                    value: total,
                });
            }
            if (total - sum).abs() > 1e-6 * total.abs().max(sum.abs()) {
                return Err(HarmonizeError::InconsistentSector {
                    sector: k.0.clone(),
                    year: k.1,
                    sector_total: total,
                    brand_sum: sum,
                });
            }
        }
        Ok(Self { brand, sector })
    }

    /// Brand world revenue from the ledger and the implied sector totals.
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut brand = BTreeMap::new();
        for ((_, b, y), v) in &ds.revenue.entries {
            *brand.entry((b.clone(), *y)).or_insert(0.0) += v;
        }
        let mut sector = BTreeMap::new();
        for ((b, y), v) in &brand {
            if let Some(rec) = ds.brands.get(b) {
                *sector.entry((rec.sector.clone(), *y)).or_insert(0.0) += v;
            }
        }
        Self { brand, sector }
    }

    pub fn brand_target(&self, brand: &BrandId, year: Year) -> f64 {
        self.brand.get(&(brand.clone(), year)).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonizeOptions {
    /// Maximum relative constraint violation at convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep observed entries fixed and scale only the rest.
    pub freeze_observed: bool,
    /// Optional destination totals; when present, rows and columns are
    /// scaled alternately.
    pub dest_targets: Option<BTreeMap<(CountryCode, Year), f64>>,
}

impl Default for HarmonizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1000,
            freeze_observed: false,
            dest_targets: None,
        }
    }
}

struct Cell {
    brand: usize,
    dest: usize,
    value: f64,
    frozen: bool,
}

/// Scales free cells of each group (rows or columns) to their targets.
/// Returns the largest relative violation before scaling.
fn scale_groups(
    cells: &mut [Cell],
    group_of: impl Fn(&Cell) -> usize,
    targets: &[f64],
    label: impl Fn(usize, f64) -> HarmonizeError,
) -> Result<f64, HarmonizeError> {
    let n = targets.len();
    let mut frozen = vec![0.0; n];
    let mut free = vec![0.0; n];
    for c in cells.iter() {
        if c.frozen {
            frozen[group_of(c)] += c.value;
        } else {
            free[group_of(c)] += c.value;
        }
    }
    let mut worst: f64 = 0.0;
    let mut factor = vec![1.0; n];
    for g in 0..n {
        let t = targets[g];
        let have = frozen[g] + free[g];
        let violation = if t > 0.0 { (have - t).abs() / t } else if have > 0.0 { 1.0 } else { 0.0 };
        worst = worst.max(violation);
        let need = t - frozen[g];
        if need < -1e-12 * t.max(frozen[g]) {
            return Err(label(g, frozen[g]));
        }
        if free[g] > 0.0 {
            factor[g] = need.max(0.0) / free[g];
        } else if need > 1e-12 * t.max(1.0) {
            return Err(label(g, -1.0));
        }
    }
    for c in cells.iter_mut() {
        if !c.frozen {
            c.value *= factor[group_of(c)];
        }
    }
    Ok(worst)
}

fn violation(cells: &[Cell], group_of: impl Fn(&Cell) -> usize, targets: &[f64]) -> f64 {
    let mut have = vec![0.0; targets.len()];
    for c in cells {
        have[group_of(c)] += c.value;
    }
    have.iter()
        .zip(targets)
        .map(|(h, t)| if *t > 0.0 { (h - t).abs() / t } else if *h > 0.0 { 1.0 } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Harmonizes every year present in `predicted`. Brands without a target in
/// a year get a zero target. Zeros stay zero and scaled entries are marked
/// harmonized.
pub fn harmonize(
    predicted: &ConsumptionMatrix,
    targets: &HarmonizationTargets,
    opts: &HarmonizeOptions,
) -> Result<ConsumptionMatrix, HarmonizeError> {
    for ((b, d, y), e) in &predicted.entries {
        if !(e.value >= 0.0) {
            return Err(HarmonizeError::NegativeValue {
                brand: b.clone(),
                dest: d.clone(),
                year: *y,
                value: e.value,
            });
        }
    }
    let mut out = ConsumptionMatrix::default();
    for year in predicted.years() {
        let keys: Vec<&(BrandId, CountryCode, Year)> = predicted.entries.keys().filter(|k| k.2 == year).collect();
        let brands: Vec<BrandId> = keys.iter().map(|k| k.0.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let dests: Vec<CountryCode> = keys.iter().map(|k| k.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let bi: BTreeMap<&BrandId, usize> = brands.iter().enumerate().map(|(i, b)| (b, i)).collect();
        let di: BTreeMap<&CountryCode, usize> = dests.iter().enumerate().map(|(i, d)| (d, i)).collect();
        let mut cells: Vec<Cell> = keys
            .iter()
            .map(|k| {
                let e = predicted.entries[*k];
                Cell {
                    brand: bi[&k.0],
                    dest: di[&k.1],
                    value: e.value,
                    frozen: opts.freeze_observed && e.provenance == Provenance::Observed,
                }
            })
            .collect();
        let row_t: Vec<f64> = brands.iter().map(|b| targets.brand_target(b, year)).collect();
        let row_err = |g: usize, observed: f64| {
            if observed >= 0.0 {
                HarmonizeError::ObservedExceedsTarget {
                    brand: brands[g].clone(),
                    year,
                    observed,
                    target: row_t[g],
                }
            } else {
                HarmonizeError::NoMass {
                    brand: brands[g].clone(),
                    year,
                    target: row_t[g],
                }
            }
        };

        match &opts.dest_targets {
            None => {
                scale_groups(&mut cells, |c| c.brand, &row_t, row_err)?;
            }
            Some(dt) => {
                let col_t: Vec<f64> = dests
                    .iter()
                    .map(|d| dt.get(&(d.clone(), year)).copied().unwrap_or(0.0))
                    .collect();
                let (rs, cs): (f64, f64) = (row_t.iter().sum(), col_t.iter().sum());
                if (rs - cs).abs() > 1e-9 * rs.max(cs) {
                    return Err(HarmonizeError::InconsistentMargins {
                        year,
                        brands: rs,
                        dests: cs,
                    });
                }
                let col_err = |g: usize, _: f64| HarmonizeError::NoDestinationMass {
                    dest: dests[g].clone(),
                    year,
                    target: col_t[g],
                };
                let mut converged = false;
                let mut worst = f64::INFINITY;
                for _ in 0..opts.max_iter {
                    scale_groups(&mut cells, |c| c.brand, &row_t, row_err)?;
                    scale_groups(&mut cells, |c| c.dest, &col_t, col_err)?;
                    worst = violation(&cells, |c| c.brand, &row_t).max(violation(&cells, |c| c.dest, &col_t));
                    if worst <= opts.tol {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(HarmonizeError::NonConvergence {
                        iterations: opts.max_iter,
                        violation: worst,
                    });
                }
            }
        }
        for (k, c) in keys.iter().zip(&cells) {
            let provenance = if c.frozen {
                Provenance::Observed
            } else {
                Provenance::Harmonized
            };
            out.insert(k.0.clone(), k.1.clone(), year, c.value, provenance);
        }
    }
    Ok(out)
}

/// Largest relative gap between brand row sums and targets.
pub fn max_brand_violation(m: &ConsumptionMatrix, targets: &HarmonizationTargets) -> f64 {
    let mut sums: BTreeMap<(BrandId, Year), f64> = BTreeMap::new();
    for ((b, _, y), e) in &m.entries {
        *sums.entry((b.clone(), *y)).or_insert(0.0) += e.value;
    }
    sums.iter()
        .map(|((b, y), s)| {
            let t = targets.brand_target(b, *y);
            if t > 0.0 {
                (s - t).abs() / t
            } else if *s > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[(&str, &[f64])]) -> ConsumptionMatrix {
        let mut m = ConsumptionMatrix::default();
        for (b, vals) in rows {
            for (j, v) in vals.iter().enumerate() {
                m.insert(BrandId::from(*b), CountryCode(format!("C{j}")), 2021, *v, Provenance::Predicted);
            }
        }
        m
    }

    fn targets(pairs: &[(&str, f64)]) -> HarmonizationTargets {
        HarmonizationTargets {
            brand: pairs.iter().map(|(b, v)| ((BrandId::from(*b), 2021), *v)).collect(),
            sector: BTreeMap::new(),
        }
    }

    fn row(m: &ConsumptionMatrix, b: &str) -> Vec<f64> {
        m.brand_row(&BrandId::from(b), 2021).values().copied().collect()
    }

    #[test]
    fn proportional_scaling() {
        let h = harmonize(&matrix(&[("a", &[2.0, 3.0, 5.0])]), &targets(&[("a", 20.0)]), &Default::default()).unwrap();
        assert_eq!(row(&h, "a"), vec![4.0, 6.0, 10.0]);
        assert!(h.entries.values().all(|e| e.provenance == Provenance::Harmonized));
    }

    #[test]
    fn consistent_input_is_a_fixed_point() {
        let m = matrix(&[("a", &[1.0, 3.0]), ("b", &[0.0, 2.5])]);
        let h = harmonize(&m, &targets(&[("a", 4.0), ("b", 2.5)]), &Default::default()).unwrap();
        assert_eq!(row(&h, "a"), vec![1.0, 3.0]);
        assert_eq!(row(&h, "b"), vec![0.0, 2.5]);
    }

    #[test]
    fn no_mass_is_an_error() {
        let m = matrix(&[("a", &[0.0, 0.0])]);
        assert!(matches!(
            harmonize(&m, &targets(&[("a", 4.0)]), &Default::default()),
            Err(HarmonizeError::NoMass { .. })
        ));
    }

    #[test]
    fn frozen_observed_entries_keep_their_value() {
        let mut m = matrix(&[("a", &[2.0, 3.0, 5.0])]);
        m.insert(BrandId::from("a"), CountryCode("C0".into()), 2021, 2.0, Provenance::Observed);
        let opts = HarmonizeOptions {
            freeze_observed: true,
            ..Default::default()
        };
        let h = harmonize(&m, &targets(&[("a", 18.0)]), &opts).unwrap();
        assert_eq!(row(&h, "a"), vec![2.0, 6.0, 10.0]);
        assert!(matches!(
            harmonize(&m, &targets(&[("a", 1.0)]), &opts),
            Err(HarmonizeError::ObservedExceedsTarget { .. })
        ));
    }

    #[test]
    fn sector_consistency_is_checked() {
        let brand: BTreeMap<_, _> = [((BrandId::from("a"), 2021), 3.0), ((BrandId::from("b"), 2021), 4.0)].into();
        let sectors: BTreeMap<_, _> = [(BrandId::from("a"), "S".to_string()), (BrandId::from("b"), "S".to_string())].into();
        let ok: BTreeMap<_, _> = [(("S".to_string(), 2021), 7.0)].into();
        assert!(HarmonizationTargets::new(brand.clone(), ok, &sectors).is_ok());
        let bad: BTreeMap<_, _> = [(("S".to_string(), 2021), 8.0)].into();
        assert!(matches!(
            HarmonizationTargets::new(brand, bad, &sectors),
            Err(HarmonizeError::InconsistentSector { .. })
        ));
    }

    #[test]
    fn inconsistent_margins_are_rejected() {
        let m = matrix(&[("a", &[1.0, 1.0])]);
        let opts = HarmonizeOptions {
            dest_targets: Some([((CountryCode("C0".into()), 2021), 1.0), ((CountryCode("C1".into()), 2021), 1.0)].into()),
            ..Default::default()
        };
        assert!(matches!(
            harmonize(&m, &targets(&[("a", 3.0)]), &opts),
            Err(HarmonizeError::InconsistentMargins { .. })
        ));
    }
}
