//! Revealed comparative advantage, specialization matrices and the
//! economic/product complexity indices.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data_model::{PhysicalTrade, Year};
use crate::transport::FlowRow;

pub const PHYSICAL_PREFIX: &str = "hs4:";
pub const DIGITAL_PREFIX: &str = "digital:";

/// Tolerance on eigenvalue gaps below which the spectrum is degenerate.
const GAP_TOL: f64 = 1e-10;
const AGREEMENT_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ComplexityError {
    #[error("output matrix has no positive entries")]
    ZeroTotal,
    #[error("negative or non-finite output {0}")]
    InvalidValue(f64),
    #[error("matrix is empty after filtering")]
    Empty,
    #[error("need at least 3 countries, got {0}")]
    TooFewCountries(usize),
    #[error("specialization matrix is disconnected")]
    Disconnected,
    #[error("degenerate spectrum")]
    DegenerateSpectrum,
    #[error("eigenvector and iterative ECI differ by {0}")]
    CrossCheck(f64),
    #[error("cannot rescale a constant vector")]
    Constant,
    #[error("country index mismatch: {0}")]
    CountryMismatch(String),
}

/// Country × activity outputs in USD, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMatrix {
    pub countries: Vec<String>,
    pub activities: Vec<String>,
    pub values: Vec<f64>,
}

impl OutputMatrix {
    /// Builds the matrix from (country, activity, value) cells; repeated
    /// cells add up. Rows and columns follow sorted label order.
    pub fn from_cells<'a>(cells: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Self {
        let mut sums: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for (c, a, v) in cells {
            *sums.entry((c, a)).or_insert(0.0) += v;
        }
        let countries: Vec<String> = sums.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
        let activities: Vec<String> = sums.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
        let ci: BTreeMap<&str, usize> = countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let ai: BTreeMap<&str, usize> = activities.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut values = vec![0.0; countries.len() * activities.len()];
        for ((c, a), v) in sums {
            values[ci[c] * activities.len() + ai[a]] = v;
        }
        Self {
            countries,
            activities,
            values,
        }
    }

    pub fn get(&self, c: usize, a: usize) -> f64 {
        self.values[c * self.activities.len() + a]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Nonzero cells as (country, activity, value).
    pub fn triplets(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        let n = self.activities.len();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(k, v)| (self.countries[k / n].as_str(), self.activities[k % n].as_str(), *v))
    }
}

/// RCA values over the rows and columns that had positive totals.
#[derive(Clone, Debug, PartialEq)]
pub struct RcaMatrix {
    pub countries: Vec<String>,
    pub activities: Vec<String>,
    pub values: Vec<f64>,
    pub dropped_countries: Vec<String>,
    pub dropped_activities: Vec<String>,
}

/// R_cp = (X_cp / X_c) / (X_p / X). All-zero rows and columns are dropped
/// and reported.
pub fn rca(x: &OutputMatrix) -> Result<RcaMatrix, ComplexityError> {
    if let Some(&v) = x.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(ComplexityError::InvalidValue(v));
    }
    let (m, n) = (x.countries.len(), x.activities.len());
    let row: Vec<f64> = (0..m).map(|c| (0..n).map(|a| x.get(c, a)).sum()).collect();
    let col: Vec<f64> = (0..n).map(|a| (0..m).map(|c| x.get(c, a)).sum()).collect();
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return Err(ComplexityError::ZeroTotal);
    }
    let keep_c: Vec<usize> = (0..m).filter(|&c| row[c] > 0.0).collect();
    let keep_a: Vec<usize> = (0..n).filter(|&a| col[a] > 0.0).collect();
    let mut values = Vec::with_capacity(keep_c.len() * keep_a.len());
    for &c in &keep_c {
        for &a in &keep_a {
            values.push((x.get(c, a) / row[c]) / (col[a] / total));
        }
    }
    Ok(RcaMatrix {
        countries: keep_c.iter().map(|&c| x.countries[c].clone()).collect(),
        activities: keep_a.iter().map(|&a| x.activities[a].clone()).collect(),
        values,
        dropped_countries: (0..m).filter(|&c| row[c] <= 0.0).map(|c| x.countries[c].clone()).collect(),
        dropped_activities: (0..n).filter(|&a| col[a] <= 0.0).map(|a| x.activities[a].clone()).collect(),
    })
}

/// Binary specialization matrix with diversity and ubiquity.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecializationMatrix {
    pub countries: Vec<String>,
    pub activities: Vec<String>,
    pub m: Vec<u8>,
    pub dropped_countries: Vec<String>,
    pub dropped_activities: Vec<String>,
}

impl SpecializationMatrix {
    /// Builds from rows of 0/1 entries without filtering.
    pub fn from_rows(countries: Vec<String>, activities: Vec<String>, rows: &[Vec<u8>]) -> Self {
        Self {
            countries,
            activities,
            m: rows.concat(),
            dropped_countries: Vec::new(),
            dropped_activities: Vec::new(),
        }
    }

    pub fn get(&self, c: usize, a: usize) -> u8 {
        self.m[c * self.activities.len() + a]
    }

    pub fn diversity(&self) -> Vec<f64> {
        let n = self.activities.len();
        (0..self.countries.len())
            .map(|c| (0..n).map(|a| f64::from(self.get(c, a))).sum())
            .collect()
    }

    pub fn ubiquity(&self) -> Vec<f64> {
        let m = self.countries.len();
        (0..self.activities.len())
            .map(|a| (0..m).map(|c| f64::from(self.get(c, a))).sum())
            .collect()
    }
}

/// M = 1 where R ≥ 1; rows and columns left without a one are dropped.
pub fn binarize(r: &RcaMatrix) -> Result<SpecializationMatrix, ComplexityError> {
    let (m, n) = (r.countries.len(), r.activities.len());
    let full: Vec<u8> = r.values.iter().map(|v| u8::from(*v >= 1.0)).collect();
    let keep_c: Vec<usize> = (0..m).filter(|&c| (0..n).any(|a| full[c * n + a] == 1)).collect();
    let keep_a: Vec<usize> = (0..n).filter(|&a| (0..m).any(|c| full[c * n + a] == 1)).collect();
    if keep_c.is_empty() || keep_a.is_empty() {
        return Err(ComplexityError::Empty);
    }
    let mut out = Vec::with_capacity(keep_c.len() * keep_a.len());
    for &c in &keep_c {
        for &a in &keep_a {
            out.push(full[c * n + a]);
        }
    }
    let mut dropped_countries = r.dropped_countries.clone();
    dropped_countries.extend((0..m).filter(|c| !keep_c.contains(c)).map(|c| r.countries[c].clone()));
    let mut dropped_activities = r.dropped_activities.clone();
    dropped_activities.extend((0..n).filter(|a| !keep_a.contains(a)).map(|a| r.activities[a].clone()));
    Ok(SpecializationMatrix {
        countries: keep_c.iter().map(|&c| r.countries[c].clone()).collect(),
        activities: keep_a.iter().map(|&a| r.activities[a].clone()).collect(),
        m: out,
        dropped_countries,
        dropped_activities,
    })
}

/// M̃_cc' = Σ_p M_cp M_c'p / (M_c M_p).
pub fn mtilde(sm: &SpecializationMatrix) -> DMatrix<f64> {
    let (m, n) = (sm.countries.len(), sm.activities.len());
    let kc = sm.diversity();
    let kp = sm.ubiquity();
    DMatrix::from_fn(m, m, |c, d| {
        (0..n)
            .filter(|&a| sm.get(c, a) == 1 && sm.get(d, a) == 1)
            .map(|a| 1.0 / kp[a])
            .sum::<f64>()
            / kc[c]
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityScores {
    pub countries: Vec<String>,
    pub activities: Vec<String>,
    pub eci: Vec<f64>,
    pub pci: Vec<f64>,
    pub eci_minmax: Vec<f64>,
    pub pci_minmax: Vec<f64>,
    /// Second largest eigenvalue of M̃.
    pub lambda2: f64,
    /// Largest absolute difference between the eigenvector and iterative ECI.
    pub iterative_gap: f64,
}

fn zscore(v: &[f64]) -> Result<Vec<f64>, ComplexityError> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(ComplexityError::DegenerateSpectrum);
    }
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

fn connected(sm: &SpecializationMatrix) -> bool {
    let (m, n) = (sm.countries.len(), sm.activities.len());
    let mut seen = vec![false; m + n];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        let next: Vec<usize> = if v < m {
            (0..n).filter(|&a| sm.get(v, a) == 1).map(|a| m + a).collect()
        } else {
            (0..m).filter(|&c| sm.get(c, v - m) == 1).collect()
        };
        for w in next {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.iter().all(|s| *s)
}

/// Country averages of activity values and activity averages of country values.
fn country_mean(sm: &SpecializationMatrix, kc: &[f64], kp_vals: &[f64]) -> Vec<f64> {
    let n = sm.activities.len();
    (0..sm.countries.len())
        .map(|c| (0..n).filter(|&a| sm.get(c, a) == 1).map(|a| kp_vals[a]).sum::<f64>() / kc[c])
        .collect()
}

fn activity_mean(sm: &SpecializationMatrix, kp: &[f64], kc_vals: &[f64]) -> Vec<f64> {
    let m = sm.countries.len();
    (0..sm.activities.len())
        .map(|a| (0..m).filter(|&c| sm.get(c, a) == 1).map(|c| kc_vals[c]).sum::<f64>() / kp[a])
        .collect()
}

fn pearson_sign(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum()
}

/// ECI from the second eigenvector of M̃, oriented to correlate
/// non-negatively with diversity, and PCI as the activity average of ECI;
/// both z-scored. The iterative averaging map is run alongside and must
/// agree. Rows and columns are processed in label order, so relabeling
/// permutations give bitwise identical scores.
pub fn eci_pci(sm: &SpecializationMatrix) -> Result<ComplexityScores, ComplexityError> {
    let mut rows: Vec<usize> = (0..sm.countries.len()).collect();
    rows.sort_by(|&a, &b| sm.countries[a].cmp(&sm.countries[b]));
    let mut cols: Vec<usize> = (0..sm.activities.len()).collect();
    cols.sort_by(|&a, &b| sm.activities[a].cmp(&sm.activities[b]));
    if rows.windows(2).all(|w| w[0] < w[1]) && cols.windows(2).all(|w| w[0] < w[1]) {
        return eci_pci_sorted(sm);
    }
    let sorted = SpecializationMatrix {
        countries: rows.iter().map(|&c| sm.countries[c].clone()).collect(),
        activities: cols.iter().map(|&a| sm.activities[a].clone()).collect(),
        m: rows.iter().flat_map(|&c| cols.iter().map(move |&a| sm.get(c, a))).collect(),
        dropped_countries: sm.dropped_countries.clone(),
        dropped_activities: sm.dropped_activities.clone(),
    };
    let s = eci_pci_sorted(&sorted)?;
    let unsort = |v: &[f64], order: &[usize]| {
        let mut out = vec![0.0; v.len()];
        for (k, &i) in order.iter().enumerate() {
            out[i] = v[k];
        }
        out
    };
    Ok(ComplexityScores {
        countries: sm.countries.clone(),
        activities: sm.activities.clone(),
        eci: unsort(&s.eci, &rows),
        pci: unsort(&s.pci, &cols),
        eci_minmax: unsort(&s.eci_minmax, &rows),
        pci_minmax: unsort(&s.pci_minmax, &cols),
        lambda2: s.lambda2,
        iterative_gap: s.iterative_gap,
    })
}

fn eci_pci_sorted(sm: &SpecializationMatrix) -> Result<ComplexityScores, ComplexityError> {
    let (m, n) = (sm.countries.len(), sm.activities.len());
    if m < 3 {
        return Err(ComplexityError::TooFewCountries(m));
    }
    let kc = sm.diversity();
    let kp = sm.ubiquity();
    if kc.iter().chain(&kp).any(|k| *k == 0.0) {
        return Err(ComplexityError::Empty);
    }
    // M̃ = D⁻¹A with A symmetric; S = D^{-1/2} A D^{-1/2} shares its spectrum
    // and M̃'s eigenvectors are D^{-1/2} times those of S.
    let s = DMatrix::from_fn(m, m, |c, d| {
        (0..n)
            .filter(|&a| sm.get(c, a) == 1 && sm.get(d, a) == 1)
            .map(|a| 1.0 / kp[a])
            .sum::<f64>()
            / (kc[c] * kc[d]).sqrt()
    });
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if lam[0] - lam[m - 1] < GAP_TOL {
        return Err(ComplexityError::DegenerateSpectrum);
    }
    if !connected(sm) {
        return Err(ComplexityError::Disconnected);
    }
    if lam[0] - lam[1] < GAP_TOL || lam[1] - lam[2] < GAP_TOL {
        return Err(ComplexityError::DegenerateSpectrum);
    }
    let u = eig.eigenvectors.column(order[1]);
    let raw: Vec<f64> = (0..m).map(|c| u[c] / kc[c].sqrt()).collect();
    let mut eci = zscore(&raw)?;
    if pearson_sign(&eci, &kc) < 0.0 {
        eci.iter_mut().for_each(|v| *v = -*v);
    }
    let pci = zscore(&activity_mean(sm, &kp, &eci))?;

    let iterative = iterate(sm, &kc, &kp)?;
    let gap = eci
        .iter()
        .zip(&iterative)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap > AGREEMENT_TOL {
        return Err(ComplexityError::CrossCheck(gap));
    }
    Ok(ComplexityScores {
        countries: sm.countries.clone(),
        activities: sm.activities.clone(),
        eci_minmax: minmax(&eci)?,
        pci_minmax: minmax(&pci)?,
        eci,
        pci,
        lambda2: lam[1],
        iterative_gap: gap,
    })
}

/// Fixed point of the alternating average map with z-scoring each round,
/// started from diversity and oriented like the eigenvector result.
fn iterate(sm: &SpecializationMatrix, kc: &[f64], kp: &[f64]) -> Result<Vec<f64>, ComplexityError> {
    let m = kc.len();
    let start: Vec<f64> = if kc.iter().any(|k| *k != kc[0]) {
        kc.to_vec()
    } else {
        (0..m).map(|i| i as f64).collect()
    };
    let mut x = zscore(&start)?;
    for _ in 0..1_000_000 {
        let p = activity_mean(sm, kp, &x);
        let mut next = zscore(&country_mean(sm, kc, &p))?;
        if pearson_sign(&next, kc) < 0.0 {
            next.iter_mut().for_each(|v| *v = -*v);
        }
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-14 {
            break;
        }
    }
    Ok(x)
}

/// (x − min)/(max − min).
pub fn minmax(v: &[f64]) -> Result<Vec<f64>, ComplexityError> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(ComplexityError::Constant);
    }
    Ok(v.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

/// Physical exports of `year` by (origin, HS4), namespaced.
pub fn physical_matrix(physical: &PhysicalTrade, year: Year) -> OutputMatrix {
    let by = physical.exports_by_product(year);
    let labels: Vec<(String, String, f64)> = by
        .into_iter()
        .map(|((c, p), v)| (c.to_string(), format!("{PHYSICAL_PREFIX}{p}"), v))
        .collect();
    OutputMatrix::from_cells(labels.iter().map(|(c, a, v)| (c.as_str(), a.as_str(), *v)))
}

/// Digital exports of `year` by (origin, sector), namespaced.
pub fn digital_matrix(flows: &[FlowRow], year: Year) -> OutputMatrix {
    let labels: Vec<(String, String, f64)> = flows
        .iter()
        .filter(|f| f.year == year)
        .map(|f| (f.origin.to_string(), format!("{DIGITAL_PREFIX}{}", f.sector), f.value))
        .collect();
    OutputMatrix::from_cells(labels.iter().map(|(c, a, v)| (c.as_str(), a.as_str(), *v)))
}

/// Column union of two output matrices over the union of their countries.
pub fn merge_digital(physical: &OutputMatrix, digital: &OutputMatrix) -> Result<OutputMatrix, ComplexityError> {
    if let Some(a) = physical.activities.iter().find(|a| digital.activities.contains(a)) {
        return Err(ComplexityError::CountryMismatch(format!("activity {a} on both sides")));
    }
    let cells = physical.triplets().chain(digital.triplets());
    let mut merged = OutputMatrix::from_cells(cells);
    // Keep every labelled row and column even when all its cells are zero.
    let countries: BTreeSet<&String> = physical.countries.iter().chain(&digital.countries).collect();
    let activities: BTreeSet<&String> = physical.activities.iter().chain(&digital.activities).collect();
    if countries.len() != merged.countries.len() || activities.len() != merged.activities.len() {
        let full = OutputMatrix {
            countries: countries.into_iter().cloned().collect(),
            activities: activities.into_iter().cloned().collect(),
            values: Vec::new(),
        };
        let ci: BTreeMap<&str, usize> = full.countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let ai: BTreeMap<&str, usize> = full.activities.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut values = vec![0.0; full.countries.len() * full.activities.len()];
        for (c, a, v) in merged.triplets() {
            values[ci[c] * full.activities.len() + ai[a]] = v;
        }
        merged = OutputMatrix { values, ..full };
    }
    Ok(merged)
}

/// RCA, binarization and ECI/PCI in one call.
pub fn complexity_of(x: &OutputMatrix) -> Result<(SpecializationMatrix, ComplexityScores), ComplexityError> {
    let sm = binarize(&rca(x)?)?;
    let scores = eci_pci(&sm)?;
    Ok((sm, scores))
}
