use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type Year = i32;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// ISO3 country code.
    CountryCode
);
string_id!(FirmId);
string_id!(BrandId);

/// UN geoscheme regions. The index in this table is the ordinal code used by
/// the tree features.
pub const REGIONS: [&str; 5] = ["Africa", "Americas", "Asia", "Europe", "Oceania"];

pub fn region_code(region: &str) -> Option<usize> {
    REGIONS.iter().position(|r| *r == region)
}

/// The 29 digital product and service sectors.
pub const SECTORS: [&str; 29] = [
    "Cybersecurity",
    "Mobile Application",
    "Cloud Computing",
    "File Hosting Service",
    "Web Hosting",
    "Data Licensing",
    "Digital Advertising",
    "Digital Music Streaming & Downloads",
    "Video on Demand",
    "eBooks",
    "Gaming Networks",
    "PC and Console Games",
    "Mobile Games",
    "Online Dating",
    "Online Education",
    "Online Food Ordering",
    "Online Gambling",
    "Online Marketplace",
    "Operating System",
    "Payment Service",
    "Business Intelligence Software",
    "Customer Relationship Management Software",
    "Enterprise Resource Planning Software",
    "Other Enterprise Software",
    "Supply Chain Management Software",
    "Administrative Software",
    "Collaboration Software",
    "Creative Software",
    "Office Software",
];

pub fn is_known_sector(sector: &str) -> bool {
    SECTORS.contains(&sector)
}

/// Per-year covariates of a country.
#[derive(Clone, Debug, PartialEq)]
pub struct CountryYear {
    pub gdp_ppp: f64,
    pub population: f64,
    pub internet_share: f64,
    pub fixed_bb_share: f64,
    pub mobile_bb_share: f64,
    pub emissions_prod: Option<f64>,
    pub emissions_cons: Option<f64>,
}

impl CountryYear {
    pub fn gdp_per_capita(&self) -> f64 {
        self.gdp_ppp / self.population
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountryRecord {
    pub code: CountryCode,
    pub region: String,
    pub years: BTreeMap<Year, CountryYear>,
}

impl CountryRecord {
    pub fn year(&self, year: Year) -> Option<&CountryYear> {
        self.years.get(&year)
    }
}

/// Gravity covariates of an ordered country pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadRecord {
    pub origin: CountryCode,
    pub dest: CountryCode,
    pub dist_km: f64,
    pub contiguity: bool,
    pub comlang_official: bool,
    pub comlang_ethno: bool,
    pub colony_ever: bool,
    pub comcol_post45: bool,
    pub curcol: bool,
    pub col_post45: bool,
    pub same_country_ever: bool,
}

impl DyadRecord {
    /// Covariates used for a country paired with itself when the input carries
    /// no internal-distance row.
    pub fn domestic(code: &CountryCode, floor_km: f64) -> Self {
        Self {
            origin: code.clone(),
            dest: code.clone(),
            dist_km: floor_km,
            contiguity: false,
            comlang_official: true,
            comlang_ethno: true,
            colony_ever: false,
            comcol_post45: false,
            curcol: false,
            col_post45: false,
            same_country_ever: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FirmRecord {
    pub firm_id: FirmId,
    pub parent_id: FirmId,
    pub country: CountryCode,
}

impl FirmRecord {
    pub fn is_parent(&self) -> bool {
        self.parent_id == self.firm_id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrandRecord {
    pub brand_id: BrandId,
    pub parent_firm_id: FirmId,
    pub sector: String,
}

/// Firm-level revenue per brand and year, in USD.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RevenueLedger {
    pub entries: BTreeMap<(FirmId, BrandId, Year), f64>,
}

impl RevenueLedger {
    pub fn years(&self) -> BTreeSet<Year> {
        self.entries.keys().map(|(_, _, y)| *y).collect()
    }

    pub fn brand_world_revenue(&self, brand: &BrandId, year: Year) -> f64 {
        self.entries
            .iter()
            .filter(|((_, b, y), _)| b == brand && *y == year)
            .map(|(_, v)| *v)
            .sum()
    }

    /// World revenue of every brand in `year`.
    pub fn brand_totals(&self, year: Year) -> BTreeMap<BrandId, f64> {
        let mut out = BTreeMap::new();
        for ((_, b, y), v) in &self.entries {
            if *y == year {
                *out.entry(b.clone()).or_insert(0.0) += *v;
            }
        }
        out
    }

    pub fn world_total(&self, year: Year) -> f64 {
        self.entries
            .iter()
            .filter(|((_, _, y), _)| *y == year)
            .map(|(_, v)| *v)
            .sum()
    }
}

/// Where a consumption value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Observed,
    Predicted,
    Harmonized,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::Predicted => "predicted",
            Provenance::Harmonized => "harmonized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "observed" => Some(Provenance::Observed),
            "predicted" => Some(Provenance::Predicted),
            "harmonized" => Some(Provenance::Harmonized),
            _ => None,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsumptionEntry {
    pub value: f64,
    pub provenance: Provenance,
}

/// Consumption in USD keyed by (brand, destination, year).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConsumptionMatrix {
    pub entries: BTreeMap<(BrandId, CountryCode, Year), ConsumptionEntry>,
}

impl ConsumptionMatrix {
    pub fn insert(&mut self, brand: BrandId, dest: CountryCode, year: Year, value: f64, provenance: Provenance) {
        self.entries
            .insert((brand, dest, year), ConsumptionEntry { value, provenance });
    }

    pub fn get(&self, brand: &BrandId, dest: &CountryCode, year: Year) -> Option<f64> {
        self.entries
            .get(&(brand.clone(), dest.clone(), year))
            .map(|e| e.value)
    }

    /// Countries with at least one observed entry.
    pub fn observed_countries(&self) -> BTreeSet<CountryCode> {
        self.entries
            .iter()
            .filter(|(_, e)| e.provenance == Provenance::Observed)
            .map(|((_, c, _), _)| c.clone())
            .collect()
    }

    pub fn years(&self) -> BTreeSet<Year> {
        self.entries.keys().map(|(_, _, y)| *y).collect()
    }

    /// Entries of one brand in one year, by destination.
    pub fn brand_row(&self, brand: &BrandId, year: Year) -> BTreeMap<CountryCode, f64> {
        self.entries
            .iter()
            .filter(|((b, _, y), _)| b == brand && *y == year)
            .map(|((_, c, _), e)| (c.clone(), e.value))
            .collect()
    }
}

/// Physical (HS4) trade in USD keyed by (origin, dest, hs4, year).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhysicalTrade {
    pub entries: BTreeMap<(CountryCode, CountryCode, String, Year), f64>,
}

impl PhysicalTrade {
    /// Exports by (origin, hs4) in `year`, summed over destinations.
    pub fn exports_by_product(&self, year: Year) -> BTreeMap<(CountryCode, String), f64> {
        let mut out = BTreeMap::new();
        for ((o, _, hs, y), v) in &self.entries {
            if *y == year {
                *out.entry((o.clone(), hs.clone())).or_insert(0.0) += *v;
            }
        }
        out
    }

    pub fn years(&self) -> BTreeSet<Year> {
        self.entries.keys().map(|(_, _, _, y)| *y).collect()
    }
}

/// The full input file set, validated and immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub countries: BTreeMap<CountryCode, CountryRecord>,
    pub dyads: BTreeMap<(CountryCode, CountryCode), DyadRecord>,
    pub firms: BTreeMap<FirmId, FirmRecord>,
    pub brands: BTreeMap<BrandId, BrandRecord>,
    pub revenue: RevenueLedger,
    pub consumption: ConsumptionMatrix,
    pub physical: Option<PhysicalTrade>,
    pub first_year: Year,
    pub last_year: Year,
}

impl Dataset {
    pub fn years(&self) -> impl Iterator<Item = Year> {
        self.first_year..=self.last_year
    }

    pub fn country_year(&self, code: &CountryCode, year: Year) -> Option<&CountryYear> {
        self.countries.get(code).and_then(|c| c.year(year))
    }

    /// Country of the parent firm that owns `brand`.
    pub fn brand_origin(&self, brand: &BrandId) -> Option<&CountryCode> {
        let b = self.brands.get(brand)?;
        self.firms.get(&b.parent_firm_id).map(|f| &f.country)
    }

    pub fn dyad(&self, origin: &CountryCode, dest: &CountryCode) -> Option<&DyadRecord> {
        self.dyads.get(&(origin.clone(), dest.clone()))
    }

    /// Revenue attributed to each origin country (firm location) for one
    /// brand and year: the R_op column of the ledger.
    pub fn origin_revenue(&self, brand: &BrandId, year: Year) -> BTreeMap<CountryCode, f64> {
        let mut out = BTreeMap::new();
        for ((firm, b, y), v) in &self.revenue.entries {
            if b != brand || *y != year {
                continue;
            }
            if let Some(f) = self.firms.get(firm) {
                *out.entry(f.country.clone()).or_insert(0.0) += *v;
            }
        }
        out
    }

    pub fn country_codes(&self) -> Vec<CountryCode> {
        self.countries.keys().cloned().collect()
    }
}
