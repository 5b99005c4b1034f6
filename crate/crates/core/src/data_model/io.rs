//! CSV ingestion and canonical serialization of the input file set.
//!
//! Serialization is canonical: rows are written in key order and floats use
//! the shortest round-trip representation, so a dataset digest depends only
//! on content.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer};
use sha2::{Digest, Sha256};

use super::types::*;
use super::DataError;

/// Locations of the input CSV files.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPaths {
    pub countries: PathBuf,
    pub dyads: PathBuf,
    pub firms: PathBuf,
    pub brands: PathBuf,
    pub revenues: PathBuf,
    pub consumption: PathBuf,
    /// Optional; physical-trade analytics are disabled when absent.
    pub physical_trade: Option<PathBuf>,
}

impl DatasetPaths {
    /// Standard file names inside one directory. `physical_trade.csv` is
    /// picked up only when it exists.
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let physical = dir.join("physical_trade.csv");
        Self {
            countries: dir.join("countries.csv"),
            dyads: dir.join("dyads.csv"),
            firms: dir.join("firms.csv"),
            brands: dir.join("brands.csv"),
            revenues: dir.join("revenues.csv"),
            consumption: dir.join("consumption.csv"),
            physical_trade: physical.exists().then_some(physical),
        }
    }
}

fn bool01<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let v = u8::deserialize(d)?;
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(serde::de::Error::custom(format!("boolean must be 0 or 1, got {other}"))),
    }
}

#[derive(Deserialize)]
struct CountryRow {
    code: String,
    year: Year,
    region: String,
    gdp_ppp: f64,
    population: f64,
    internet_share: f64,
    fixed_bb_share: f64,
    mobile_bb_share: f64,
    emissions_prod: Option<f64>,
    emissions_cons: Option<f64>,
}

#[derive(Deserialize)]
struct DyadRow {
    origin: String,
    dest: String,
    dist_km: f64,
    #[serde(deserialize_with = "bool01")]
    contiguity: bool,
    #[serde(deserialize_with = "bool01")]
    comlang_official: bool,
    #[serde(deserialize_with = "bool01")]
    comlang_ethno: bool,
    #[serde(deserialize_with = "bool01")]
    colony_ever: bool,
    #[serde(deserialize_with = "bool01")]
    comcol_post45: bool,
    #[serde(deserialize_with = "bool01")]
    curcol: bool,
    #[serde(deserialize_with = "bool01")]
    col_post45: bool,
    #[serde(deserialize_with = "bool01")]
    same_country_ever: bool,
}

#[derive(Deserialize)]
struct FirmRow {
    firm_id: String,
    parent_id: Option<String>,
    country: String,
}

#[derive(Deserialize)]
struct BrandRow {
    brand_id: String,
    parent_firm_id: String,
    sector: String,
}

#[derive(Deserialize)]
struct RevenueRow {
    firm_id: String,
    brand_id: String,
    year: Year,
    revenue_usd: f64,
}

#[derive(Deserialize)]
struct ConsumptionRow {
    brand_id: String,
    country: String,
    year: Year,
    consumption_usd: f64,
}

#[derive(Deserialize)]
struct PhysicalRow {
    origin: String,
    dest: String,
    hs4: String,
    year: Year,
    value_usd: f64,
}

/// Reads every row of a CSV file, mapping deserialization failures to a
/// schema error that names the file, the row and the column.
pub(crate) fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = path.display().to_string();
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DataError::Io { path: file.clone(), source: e })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| schema_error(&file, None, e))?
        .clone();
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<T>().enumerate() {
        out.push(rec.map_err(|e| schema_error(&file, Some((i + 1, &headers)), e))?);
    }
    Ok(out)
}

fn schema_error(file: &str, at: Option<(usize, &csv::StringRecord)>, e: csv::Error) -> DataError {
    let (row, column) = match (at, e.kind()) {
        (Some((row, headers)), csv::ErrorKind::Deserialize { err, .. }) => {
            let col = err
                .field()
                .and_then(|i| headers.get(i as usize))
                .map(str::to_string)
                .unwrap_or_else(|| "-".to_string());
            (row, col)
        }
        (Some((row, _)), _) => (row, "-".to_string()),
        (None, _) => (0, "-".to_string()),
    };
    DataError::Schema {
        file: file.to_string(),
        row,
        column,
        message: e.to_string(),
    }
}

/// Parses the file set into a [`Dataset`] without any semantic checks.
///
/// Used by the `validate` stage, which needs to see invalid content in order
/// to report on it.
pub fn load_raw(paths: &DatasetPaths) -> Result<Dataset, DataError> {
    let mut countries: BTreeMap<CountryCode, CountryRecord> = BTreeMap::new();
    for r in read_rows::<CountryRow>(&paths.countries)? {
        let code = CountryCode(r.code);
        let rec = countries.entry(code.clone()).or_insert_with(|| CountryRecord {
            code,
            region: r.region.clone(),
            years: BTreeMap::new(),
        });
        rec.years.insert(
            r.year,
            CountryYear {
                gdp_ppp: r.gdp_ppp,
                population: r.population,
                internet_share: r.internet_share,
                fixed_bb_share: r.fixed_bb_share,
                mobile_bb_share: r.mobile_bb_share,
                emissions_prod: r.emissions_prod,
                emissions_cons: r.emissions_cons,
            },
        );
    }

    let mut dyads = BTreeMap::new();
    for r in read_rows::<DyadRow>(&paths.dyads)? {
        let key = (CountryCode(r.origin.clone()), CountryCode(r.dest.clone()));
        dyads.insert(
            key,
            DyadRecord {
                origin: CountryCode(r.origin),
                dest: CountryCode(r.dest),
                dist_km: r.dist_km,
                contiguity: r.contiguity,
                comlang_official: r.comlang_official,
                comlang_ethno: r.comlang_ethno,
                colony_ever: r.colony_ever,
                comcol_post45: r.comcol_post45,
                curcol: r.curcol,
                col_post45: r.col_post45,
                same_country_ever: r.same_country_ever,
            },
        );
    }

    let mut firms = BTreeMap::new();
    for r in read_rows::<FirmRow>(&paths.firms)? {
        let id = FirmId(r.firm_id);
        let parent = match r.parent_id {
            Some(p) if !p.is_empty() => FirmId(p),
            _ => id.clone(),
        };
        firms.insert(
            id.clone(),
            FirmRecord {
                firm_id: id,
                parent_id: parent,
                country: CountryCode(r.country),
            },
        );
    }

    let mut brands = BTreeMap::new();
    for r in read_rows::<BrandRow>(&paths.brands)? {
        let id = BrandId(r.brand_id);
        brands.insert(
            id.clone(),
            BrandRecord {
                brand_id: id,
                parent_firm_id: FirmId(r.parent_firm_id),
                sector: r.sector,
            },
        );
    }

    let mut revenue = RevenueLedger::default();
    for r in read_rows::<RevenueRow>(&paths.revenues)? {
        *revenue
            .entries
            .entry((FirmId(r.firm_id), BrandId(r.brand_id), r.year))
            .or_insert(0.0) += r.revenue_usd;
    }

    let mut consumption = ConsumptionMatrix::default();
    for r in read_rows::<ConsumptionRow>(&paths.consumption)? {
        consumption.insert(
            BrandId(r.brand_id),
            CountryCode(r.country),
            r.year,
            r.consumption_usd,
            Provenance::Observed,
        );
    }

    let physical = match &paths.physical_trade {
        Some(p) => {
            let mut pt = PhysicalTrade::default();
            for r in read_rows::<PhysicalRow>(p)? {
                *pt.entries
                    .entry((CountryCode(r.origin), CountryCode(r.dest), r.hs4, r.year))
                    .or_insert(0.0) += r.value_usd;
            }
            Some(pt)
        }
        None => None,
    };

    let years: Vec<Year> = if revenue.entries.is_empty() {
        countries
            .values()
            .flat_map(|c| c.years.keys().copied())
            .collect()
    } else {
        revenue.years().into_iter().collect()
    };
    let first_year = *years.iter().min().ok_or(DataError::EmptyYearRange)?;
    let last_year = *years.iter().max().ok_or(DataError::EmptyYearRange)?;

    Ok(Dataset {
        countries,
        dyads,
        firms,
        brands,
        revenue,
        consumption,
        physical,
        first_year,
        last_year,
    })
}

/// Loads and fully validates the input file set.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset, DataError> {
    let ds = load_raw(paths)?;
    check_hard_invariants(&ds)?;
    let report = super::validate(&ds);
    if !report.is_empty() {
        return Err(DataError::Invalid(report));
    }
    Ok(ds)
}

fn negative(file: &str, location: String, value: f64) -> DataError {
    DataError::NegativeValue {
        file: file.to_string(),
        location,
        value,
    }
}

/// Monetary non-negativity and referential integrity, reported as errors in
/// that order.
pub(crate) fn check_hard_invariants(ds: &Dataset) -> Result<(), DataError> {
    for ((f, b, y), v) in &ds.revenue.entries {
        if *v < 0.0 {
            return Err(negative("revenues.csv", format!("{f}/{b}/{y}"), *v));
        }
    }
    for ((b, c, y), e) in &ds.consumption.entries {
        if e.value < 0.0 {
            return Err(negative("consumption.csv", format!("{b}/{c}/{y}"), e.value));
        }
    }
    if let Some(pt) = &ds.physical {
        for ((o, d, hs, y), v) in &pt.entries {
            if *v < 0.0 {
                return Err(negative("physical_trade.csv", format!("{o}/{d}/{hs}/{y}"), *v));
            }
        }
    }
    let refint = |what: String| Err(DataError::ReferentialIntegrity(what));
    for f in ds.firms.values() {
        match ds.firms.get(&f.parent_id) {
            None => return refint(format!("firm {} has unknown parent_id {}", f.firm_id, f.parent_id)),
            Some(p) if !p.is_parent() => {
                return refint(format!("firm {} has parent {} which is itself a subsidiary", f.firm_id, p.firm_id))
            }
            _ => {}
        }
        if !ds.countries.contains_key(&f.country) {
            return refint(format!("firm {} has unknown country {}", f.firm_id, f.country));
        }
    }
    for b in ds.brands.values() {
        match ds.firms.get(&b.parent_firm_id) {
            None => return refint(format!("brand {} references unknown firm_id {}", b.brand_id, b.parent_firm_id)),
            Some(f) if !f.is_parent() => {
                return refint(format!("brand {} references firm {} which is not a parent", b.brand_id, f.firm_id))
            }
            _ => {}
        }
    }
    for (f, b, _) in ds.revenue.entries.keys() {
        let Some(firm) = ds.firms.get(f) else {
            return refint(format!("revenue row references unknown firm_id {f}"));
        };
        let Some(brand) = ds.brands.get(b) else {
            return refint(format!("revenue row references unknown brand_id {b}"));
        };
        if firm.parent_id != brand.parent_firm_id {
            return refint(format!("firm {f} does not belong to the group owning brand {b}"));
        }
    }
    for (b, c, _) in ds.consumption.entries.keys() {
        if !ds.brands.contains_key(b) {
            return refint(format!("consumption row references unknown brand_id {b}"));
        }
        if !ds.countries.contains_key(c) {
            return refint(format!("consumption row references unknown country {c}"));
        }
    }
    for (o, d) in ds.dyads.keys() {
        for c in [o, d] {
            if !ds.countries.contains_key(c) {
                return refint(format!("dyad {o}->{d} references unknown country {c}"));
            }
        }
    }
    if let Some(pt) = &ds.physical {
        for (o, d, _, _) in pt.entries.keys() {
            for c in [o, d] {
                if !ds.countries.contains_key(c) {
                    return refint(format!("physical trade row references unknown country {c}"));
                }
            }
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn b01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn to_csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

/// Canonical CSV text of every file in the set, in fixed file order.
pub fn serialize_dataset(ds: &Dataset) -> Vec<(&'static str, String)> {
    let mut files = Vec::new();
    files.push((
        "countries.csv",
        to_csv(
            &[
                "code", "year", "region", "gdp_ppp", "population", "internet_share", "fixed_bb_share",
                "mobile_bb_share", "emissions_prod", "emissions_cons",
            ],
            ds.countries.values().flat_map(|c| {
                c.years.iter().map(move |(y, v)| {
                    vec![
                        c.code.0.clone(),
                        y.to_string(),
                        c.region.clone(),
                        v.gdp_ppp.to_string(),
                        v.population.to_string(),
                        v.internet_share.to_string(),
                        v.fixed_bb_share.to_string(),
                        v.mobile_bb_share.to_string(),
                        opt(v.emissions_prod),
                        opt(v.emissions_cons),
                    ]
                })
            }),
        ),
    ));
    files.push((
        "dyads.csv",
        to_csv(
            &[
                "origin", "dest", "dist_km", "contiguity", "comlang_official", "comlang_ethno", "colony_ever",
                "comcol_post45", "curcol", "col_post45", "same_country_ever",
            ],
            ds.dyads.values().map(|d| {
                vec![
                    d.origin.0.clone(),
                    d.dest.0.clone(),
                    d.dist_km.to_string(),
                    b01(d.contiguity).into(),
                    b01(d.comlang_official).into(),
                    b01(d.comlang_ethno).into(),
                    b01(d.colony_ever).into(),
                    b01(d.comcol_post45).into(),
                    b01(d.curcol).into(),
                    b01(d.col_post45).into(),
                    b01(d.same_country_ever).into(),
                ]
            }),
        ),
    ));
    files.push((
        "firms.csv",
        to_csv(
            &["firm_id", "parent_id", "country"],
            ds.firms
                .values()
                .map(|f| vec![f.firm_id.0.clone(), f.parent_id.0.clone(), f.country.0.clone()]),
        ),
    ));
    files.push((
        "brands.csv",
        to_csv(
            &["brand_id", "parent_firm_id", "sector"],
            ds.brands
                .values()
                .map(|b| vec![b.brand_id.0.clone(), b.parent_firm_id.0.clone(), b.sector.clone()]),
        ),
    ));
    files.push((
        "revenues.csv",
        to_csv(
            &["firm_id", "brand_id", "year", "revenue_usd"],
            ds.revenue
                .entries
                .iter()
                .map(|((f, b, y), v)| vec![f.0.clone(), b.0.clone(), y.to_string(), v.to_string()]),
        ),
    ));
    files.push((
        "consumption.csv",
        to_csv(
            &["brand_id", "country", "year", "consumption_usd"],
            ds.consumption
                .entries
                .iter()
                .filter(|(_, e)| e.provenance == Provenance::Observed)
                .map(|((b, c, y), e)| vec![b.0.clone(), c.0.clone(), y.to_string(), e.value.to_string()]),
        ),
    ));
    if let Some(pt) = &ds.physical {
        files.push((
            "physical_trade.csv",
            to_csv(
                &["origin", "dest", "hs4", "year", "value_usd"],
                pt.entries
                    .iter()
                    .map(|((o, d, h, y), v)| vec![o.0.clone(), d.0.clone(), h.clone(), y.to_string(), v.to_string()]),
            ),
        ));
    }
    files
}

/// Writes the canonical file set into `dir`, creating it if needed.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<DatasetPaths, DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    for (name, text) in serialize_dataset(ds) {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(DatasetPaths::from_dir(dir))
}

/// SHA-256 over the canonical serialization, hex encoded.
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for (name, text) in serialize_dataset(ds) {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}
