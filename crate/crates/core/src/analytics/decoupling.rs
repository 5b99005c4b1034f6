//! Decoupling of growth from emissions, and export trends by decoupling group.

use std::collections::BTreeMap;

use super::AnalyticsError;
use crate::data_model::{CountryCode, Dataset, Year};
use crate::stats::{mean, sample_sd};
use crate::transport::FlowRow;

/// GDP per capita (USD) above which a country counts as high income.
pub const HIGH_INCOME_GDP_PC: f64 = 13_205.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmissionsBasis {
    #[default]
    Production,
    Consumption,
}

impl EmissionsBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Production => "production",
            Self::Consumption => "consumption",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingRecord {
    pub country: CountryCode,
    pub gdp_change: f64,
    pub em_change: f64,
    pub di: f64,
    pub decoupled: bool,
    pub basis: EmissionsBasis,
}

/// DI = (ΔGDP% − ΔEm%)/ΔGDP%, evaluated as 1 − ΔEm%/ΔGDP%.
pub fn decoupling(gdp0: f64, gdp1: f64, em0: f64, em1: f64) -> Result<(f64, f64, f64, bool), AnalyticsError> {
    if !(gdp0 > 0.0) {
        return Err(AnalyticsError::NonPositiveBase(gdp0));
    }
    if !(em0 > 0.0) {
        return Err(AnalyticsError::NonPositiveBase(em0));
    }
    let dg = (gdp1 - gdp0) / gdp0;
    let de = (em1 - em0) / em0;
    if dg == 0.0 {
        return Err(AnalyticsError::ZeroGdpChange);
    }
    let di = 1.0 - de / dg;
    Ok((dg, de, di, dg > 0.0 && di > 1.0))
}

fn emissions(ds: &Dataset, c: &CountryCode, y: Year, basis: EmissionsBasis) -> Option<f64> {
    let cy = ds.country_year(c, y)?;
    match basis {
        EmissionsBasis::Production => cy.emissions_prod,
        EmissionsBasis::Consumption => cy.emissions_cons,
    }
}

/// Per-capita decoupling of every country with the needed data between
/// `y0` and `y1`. Countries lacking emissions or with zero GDP change are
/// skipped.
pub fn country_decoupling(ds: &Dataset, y0: Year, y1: Year, basis: EmissionsBasis) -> Vec<DecouplingRecord> {
    let mut out = Vec::new();
    for c in ds.countries.keys() {
        let (Some(a), Some(b)) = (ds.country_year(c, y0), ds.country_year(c, y1)) else {
            continue;
        };
        let (Some(e0), Some(e1)) = (emissions(ds, c, y0, basis), emissions(ds, c, y1, basis)) else {
            continue;
        };
        if let Ok((dg, de, di, dec)) = decoupling(a.gdp_per_capita(), b.gdp_per_capita(), e0 / a.population, e1 / b.population)
        {
            out.push(DecouplingRecord {
                country: c.clone(),
                gdp_change: dg,
                em_change: de,
                di,
                decoupled: dec,
                basis,
            });
        }
    }
    out
}

/// Mean exports per capita of one group in one year, with standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTrend {
    pub year: Year,
    pub n: usize,
    pub digital_mean: f64,
    pub digital_se: f64,
    /// `None` without physical trade data.
    pub physical_mean: Option<f64>,
    pub physical_se: Option<f64>,
}

fn se(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        f64::NAN
    } else {
        sample_sd(xs) / (xs.len() as f64).sqrt()
    }
}

/// Yearly unweighted means of exports per capita over the countries whose
/// decoupling status equals `decoupled`, optionally restricted to high
/// income in the last year of the decoupling records.
pub fn group_trends(
    ds: &Dataset,
    flows: &[FlowRow],
    records: &[DecouplingRecord],
    decoupled: bool,
    high_income_only: bool,
    income_year: Year,
) -> Result<Vec<GroupTrend>, AnalyticsError> {
    let label = if decoupled { "decoupled" } else { "not decoupled" };
    let members: Vec<&CountryCode> = records
        .iter()
        .filter(|r| r.decoupled == decoupled)
        .filter(|r| {
            !high_income_only
                || ds
                    .country_year(&r.country, income_year)
                    .is_some_and(|cy| cy.gdp_per_capita() > HIGH_INCOME_GDP_PC)
        })
        .map(|r| &r.country)
        .collect();
    if members.is_empty() {
        return Err(AnalyticsError::EmptyGroup(label.to_string()));
    }
    let mut digital: BTreeMap<(Year, &CountryCode), f64> = BTreeMap::new();
    for f in flows {
        *digital.entry((f.year, &f.origin)).or_insert(0.0) += f.value;
    }
    let mut physical: BTreeMap<(Year, &CountryCode), f64> = BTreeMap::new();
    if let Some(p) = &ds.physical {
        for ((o, _, _, y), v) in &p.entries {
            *physical.entry((*y, o)).or_insert(0.0) += *v;
        }
    }
    let mut out = Vec::new();
    for year in ds.years() {
        let mut d = Vec::new();
        let mut p = Vec::new();
        for c in &members {
            let pop = ds
                .country_year(c, year)
                .map(|cy| cy.population)
                .filter(|p| *p > 0.0)
                .ok_or_else(|| AnalyticsError::MissingData(format!("population of {c} in {year}")))?;
            d.push(digital.get(&(year, *c)).copied().unwrap_or(0.0) / pop);
            p.push(physical.get(&(year, *c)).copied().unwrap_or(0.0) / pop);
        }
        let has_physical = ds.physical.is_some();
        out.push(GroupTrend {
            year,
            n: d.len(),
            digital_mean: mean(&d),
            digital_se: se(&d),
            physical_mean: has_physical.then(|| mean(&p)),
            physical_se: has_physical.then(|| se(&p)),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formula_examples() {
        let (dg, de, di, dec) = decoupling(100.0, 110.0, 10.0, 9.5).unwrap();
        assert!((dg - 0.1).abs() < 1e-15 && (de + 0.05).abs() < 1e-15);
        assert_eq!(di, 1.5);
        assert!(dec);
        let (_, _, di, dec) = decoupling(100.0, 110.0, 10.0, 10.0).unwrap();
        assert_eq!(di, 1.0);
        assert!(!dec);
        let (_, _, di, dec) = decoupling(100.0, 110.0, 10.0, 11.0).unwrap();
        assert_eq!(di, 0.0);
        assert!(!dec);
        assert_eq!(decoupling(100.0, 100.0, 1.0, 2.0), Err(AnalyticsError::ZeroGdpChange));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn di_above_one_iff_emissions_fall(
            g0 in 1.0f64..1e6, growth in 1e-6f64..2.0, e0 in 1.0f64..1e6, de in -0.99f64..2.0,
        ) {
            let (dg, dem, di, dec) = decoupling(g0, g0 * (1.0 + growth), e0, e0 * (1.0 + de)).unwrap();
            prop_assume!(dg > 0.0);
            prop_assert_eq!(di > 1.0, dem < 0.0);
            prop_assert_eq!(dec, dem < 0.0);
        }
    }
}
