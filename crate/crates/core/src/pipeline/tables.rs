//! CSV intermediates shared between stages. Floats are written in their
//! shortest round-trip form, so reading a table back is exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::PipelineError;
use crate::boost::TrainingTable;
use crate::data_model::{BrandId, ConsumptionMatrix, CountryCode, Provenance, Year};
use crate::features::{FeatureMatrix, FEATURE_NAMES};
use crate::transport::{Allocation, FlowRow};

pub(crate) fn num(v: f64) -> String {
    v.to_string()
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub(crate) fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let io = |e: csv::Error| PipelineError::io(path, std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let io = |e: csv::Error| PipelineError::io(path, std::io::Error::other(e));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(io)
}

#[derive(Deserialize)]
struct FlowRecord {
    year: Year,
    brand_id: String,
    sector: String,
    origin: String,
    dest: String,
    value_usd: f64,
    lower_usd: f64,
    upper_usd: f64,
}

pub const FLOW_HEADER: [&str; 8] = [
    "year", "brand_id", "sector", "origin", "dest", "value_usd", "lower_usd", "upper_usd",
];

pub fn write_flows(path: &Path, flows: &[FlowRow]) -> Result<(), PipelineError> {
    write_csv(
        path,
        &FLOW_HEADER,
        flows.iter().map(|f| {
            vec![
                f.year.to_string(),
                f.brand.to_string(),
                f.sector.clone(),
                f.origin.to_string(),
                f.dest.to_string(),
                num(f.value),
                num(f.lower),
                num(f.upper),
            ]
        }),
    )
}

pub fn read_flows(path: &Path) -> Result<Vec<FlowRow>, PipelineError> {
    Ok(read_csv::<FlowRecord>(path)?
        .into_iter()
        .map(|r| FlowRow {
            year: r.year,
            brand: BrandId(r.brand_id),
            sector: r.sector,
            origin: CountryCode(r.origin),
            dest: CountryCode(r.dest),
            value: r.value_usd,
            lower: r.lower_usd,
            upper: r.upper_usd,
        })
        .collect())
}

#[derive(Deserialize)]
struct ConsumptionRecord {
    brand_id: String,
    country: String,
    year: Year,
    consumption_usd: f64,
    provenance: String,
}

pub(crate) fn write_consumption(path: &Path, m: &ConsumptionMatrix) -> Result<(), PipelineError> {
    write_csv(
        path,
        &["brand_id", "country", "year", "consumption_usd", "provenance"],
        m.entries.iter().map(|((b, c, y), e)| {
            vec![
                b.to_string(),
                c.to_string(),
                y.to_string(),
                num(e.value),
                e.provenance.as_str().to_string(),
            ]
        }),
    )
}

pub fn read_consumption(path: &Path) -> Result<ConsumptionMatrix, PipelineError> {
    let mut m = ConsumptionMatrix::default();
    for r in read_csv::<ConsumptionRecord>(path)? {
        let p = Provenance::parse(&r.provenance).ok_or_else(|| {
            PipelineError::io(path, std::io::Error::other(format!("unknown provenance '{}'", r.provenance)))
        })?;
        m.insert(BrandId(r.brand_id), CountryCode(r.country), r.year, r.consumption_usd, p);
    }
    Ok(m)
}

pub(crate) fn allocation_file(year: Year) -> String {
    format!("allocation_{year}.csv")
}

pub(crate) fn write_allocations(path: &Path, allocs: &BTreeMap<BrandId, Allocation>) -> Result<(), PipelineError> {
    write_csv(
        path,
        &["product", "origin", "dest", "value_usd"],
        allocs.iter().flat_map(|(b, a)| {
            a.triplets()
                .map(|(o, d, v)| vec![b.to_string(), o.to_string(), d.to_string(), num(v)])
                .collect::<Vec<_>>()
        }),
    )
}

#[derive(Deserialize)]
struct AllocationRecord {
    product: String,
    origin: String,
    dest: String,
    value_usd: f64,
}

/// Rebuilds dense allocations from their sparse triplets. Origins and
/// destinations are those with a positive cell.
pub fn read_allocations(path: &Path) -> Result<BTreeMap<BrandId, Allocation>, PipelineError> {
    let mut cells: BTreeMap<BrandId, Vec<(CountryCode, CountryCode, f64)>> = BTreeMap::new();
    for r in read_csv::<AllocationRecord>(path)? {
        cells
            .entry(BrandId(r.product))
            .or_default()
            .push((CountryCode(r.origin), CountryCode(r.dest), r.value_usd));
    }
    let mut out = BTreeMap::new();
    for (b, rows) in cells {
        let mut origins: Vec<CountryCode> = rows.iter().map(|r| r.0.clone()).collect();
        let mut dests: Vec<CountryCode> = rows.iter().map(|r| r.1.clone()).collect();
        origins.sort();
        origins.dedup();
        dests.sort();
        dests.dedup();
        let mut x = vec![0.0; origins.len() * dests.len()];
        for (o, d, v) in rows {
            let i = origins.binary_search(&o).expect("origin listed");
            let j = dests.binary_search(&d).expect("dest listed");
            x[i * dests.len() + j] += v;
        }
        out.insert(
            b.clone(),
            Allocation {
                product: b,
                origins,
                dests,
                x,
                balance_factor: 1.0,
            },
        );
    }
    Ok(out)
}

/// Header of `features.csv`: keys, the 22 covariates, then the target.
pub(crate) fn feature_header() -> Vec<&'static str> {
    let mut h = vec!["brand_id", "country", "year"];
    h.extend(FEATURE_NAMES);
    h.push("consumption_usd");
    h
}

pub(crate) fn write_training_table(path: &Path, t: &TrainingTable) -> Result<(), PipelineError> {
    write_csv(
        path,
        &feature_header(),
        (0..t.n_rows()).map(|i| {
            let (b, c) = &t.keys[i];
            let mut row = vec![b.to_string(), c.to_string(), t.year.to_string()];
            row.extend(t.x.row(i).into_iter().map(num));
            row.push(num(t.y_usd[i]));
            row
        }),
    )
}

pub fn read_training_table(path: &Path) -> Result<TrainingTable, PipelineError> {
    let bad = |m: String| PipelineError::io(path, std::io::Error::other(m));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    if header != feature_header() {
        return Err(bad("unexpected features.csv header".into()));
    }
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let mut y_usd = Vec::new();
    let mut year = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parse = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", header[i])));
        let y: Year = rec[2].parse().map_err(|e| bad(format!("year: {e}")))?;
        if *year.get_or_insert(y) != y {
            return Err(bad("features.csv mixes years".into()));
        }
        keys.push((BrandId(rec[0].to_string()), CountryCode(rec[1].to_string())));
        rows.push((3..3 + FEATURE_NAMES.len()).map(parse).collect::<Result<Vec<_>, _>>()?);
        y_usd.push(parse(3 + FEATURE_NAMES.len())?);
    }
    let year = year.ok_or_else(|| bad("features.csv has no rows".into()))?;
    Ok(TrainingTable {
        year,
        keys,
        x: FeatureMatrix::from_rows(FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), &rows),
        y_usd,
    })
}
