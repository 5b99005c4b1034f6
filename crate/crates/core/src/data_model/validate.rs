use std::fmt;

use super::types::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

/// Every violated invariant of a dataset. Empty iff the dataset is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub entries: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.entries.push(Violation {
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.entries {
            writeln!(f, "{}: {}", v.location, v.message)?;
        }
        Ok(())
    }
}

pub fn validate(ds: &Dataset) -> ValidationReport {
    let mut rep = ValidationReport::default();

    if ds.first_year > ds.last_year {
        rep.push("dataset", "empty year range");
    }

    for c in ds.countries.values() {
        if crate::data_model::region_code(&c.region).is_none() {
            rep.push(format!("countries.csv {}", c.code), format!("unknown region '{}'", c.region));
        }
        for y in ds.first_year..=ds.last_year {
            if !c.years.contains_key(&y) {
                rep.push(format!("countries.csv {}", c.code), format!("missing covariates for year {y}"));
            }
        }
        for (y, v) in &c.years {
            let loc = format!("countries.csv {}/{}", c.code, y);
            for (name, s) in [
                ("internet_share", v.internet_share),
                ("fixed_bb_share", v.fixed_bb_share),
                ("mobile_bb_share", v.mobile_bb_share),
            ] {
                if !(0.0..=1.0).contains(&s) {
                    rep.push(&loc, format!("share out of [0,1]: {name} = {s}"));
                }
            }
            if !(v.gdp_ppp > 0.0) {
                rep.push(&loc, format!("gdp_ppp must be positive, got {}", v.gdp_ppp));
            }
            if !(v.population > 0.0) {
                rep.push(&loc, format!("population must be positive, got {}", v.population));
            }
            for (name, e) in [("emissions_prod", v.emissions_prod), ("emissions_cons", v.emissions_cons)] {
                if let Some(e) = e {
                    if e < 0.0 {
                        rep.push(&loc, format!("{name} must be non-negative, got {e}"));
                    }
                }
            }
        }
    }

    for ((o, d), r) in &ds.dyads {
        let loc = format!("dyads.csv {o}->{d}");
        if !ds.countries.contains_key(o) || !ds.countries.contains_key(d) {
            rep.push(&loc, "references unknown country");
        }
        if o != d && !(r.dist_km > 0.0) {
            rep.push(&loc, format!("dist_km must be positive, got {}", r.dist_km));
        }
    }
    for o in ds.countries.keys() {
        for d in ds.countries.keys() {
            if o != d && !ds.dyads.contains_key(&(o.clone(), d.clone())) {
                rep.push(format!("dyads.csv {o}->{d}"), "missing dyad for ordered pair");
            }
        }
    }

    for f in ds.firms.values() {
        let loc = format!("firms.csv {}", f.firm_id);
        match ds.firms.get(&f.parent_id) {
            None => rep.push(&loc, format!("unknown parent_id {}", f.parent_id)),
            Some(p) if !p.is_parent() => rep.push(&loc, "subsidiary chain deeper than one level"),
            _ => {}
        }
        if !ds.countries.contains_key(&f.country) {
            rep.push(&loc, format!("unknown country {}", f.country));
        }
    }

    for b in ds.brands.values() {
        let loc = format!("brands.csv {}", b.brand_id);
        if !crate::data_model::is_known_sector(&b.sector) {
            rep.push(&loc, format!("unknown sector '{}'", b.sector));
        }
        match ds.firms.get(&b.parent_firm_id) {
            None => rep.push(&loc, format!("unknown parent_firm_id {}", b.parent_firm_id)),
            Some(f) if !f.is_parent() => rep.push(&loc, "parent_firm_id is not a parent firm"),
            _ => {}
        }
    }

    for ((f, b, y), v) in &ds.revenue.entries {
        let loc = format!("revenues.csv {f}/{b}/{y}");
        if *v < 0.0 {
            rep.push(&loc, format!("negative monetary value {v}"));
        }
        match (ds.firms.get(f), ds.brands.get(b)) {
            (Some(firm), Some(brand)) if firm.parent_id != brand.parent_firm_id => {
                rep.push(&loc, "firm does not belong to the brand's parent group")
            }
            (None, _) => rep.push(&loc, "unknown firm_id"),
            (_, None) => rep.push(&loc, "unknown brand_id"),
            _ => {}
        }
    }

    for ((b, c, y), e) in &ds.consumption.entries {
        let loc = format!("consumption.csv {b}/{c}/{y}");
        if e.value < 0.0 {
            rep.push(&loc, format!("negative monetary value {}", e.value));
        }
        if !ds.brands.contains_key(b) {
            rep.push(&loc, "unknown brand_id");
        }
        if !ds.countries.contains_key(c) {
            rep.push(&loc, "unknown country");
        }
    }

    if let Some(pt) = &ds.physical {
        for ((o, d, hs, y), v) in &pt.entries {
            let loc = format!("physical_trade.csv {o}/{d}/{hs}/{y}");
            if *v < 0.0 {
                rep.push(&loc, format!("negative monetary value {v}"));
            }
            if !ds.countries.contains_key(o) || !ds.countries.contains_key(d) {
                rep.push(&loc, "references unknown country");
            }
        }
    }

    rep
}
