//! Per-product allocation of destination consumption to origin revenues,
//! bilateral flow extraction and confidence bounds.

mod bounds;
mod simplex;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data_model::{BrandId, BrandRecord, ConsumptionMatrix, CountryCode, Dataset, DyadRecord, RevenueLedger, Year};

pub use bounds::{confidence_bounds, BoundsReport, ExportBounds, ShareGrouping, ShareInterval, DEFAULT_LEVEL};

pub const DEFAULT_DOMESTIC_FLOOR_KM: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("domestic distance floor must be positive, got {0}")]
    NonPositiveFloor(f64),
    #[error("non-positive distance {dist} km between {origin} and {dest}")]
    NonPositiveDistance { origin: CountryCode, dest: CountryCode, dist: f64 },
    #[error("no distance record for {origin} -> {dest}")]
    MissingDistance { origin: CountryCode, dest: CountryCode },
    #[error("negative or non-finite marginal {0}")]
    InvalidMarginal(f64),
    #[error("product {product}: revenue {revenue} but no consumption to allocate to")]
    NothingToAllocate { product: BrandId, revenue: f64 },
    #[error("unbalanced problem: supply {supply}, demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("weight matrix has {found} entries, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("weights must be finite and positive")]
    InvalidWeight,
    #[error("transportation simplex did not terminate within {0} pivots")]
    NonConvergence(usize),
    #[error("firm {0} has no resolvable parent")]
    DanglingParent(String),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
}

/// One product's allocation problem. Weights are row-major, origins by
/// destinations.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportProblem {
    pub product: BrandId,
    pub origins: Vec<CountryCode>,
    pub dests: Vec<CountryCode>,
    pub revenue: Vec<f64>,
    pub consumption: Vec<f64>,
    pub weights: Vec<f64>,
    /// Factor applied to `consumption` by [`balance`]; 1 before balancing.
    pub balance_factor: f64,
}

impl TransportProblem {
    pub fn new(
        product: BrandId,
        origins: Vec<CountryCode>,
        dests: Vec<CountryCode>,
        revenue: Vec<f64>,
        consumption: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, TransportError> {
        if revenue.len() != origins.len() || consumption.len() != dests.len() {
            return Err(TransportError::ShapeMismatch {
                expected: origins.len() + dests.len(),
                found: revenue.len() + consumption.len(),
            });
        }
        if weights.len() != origins.len() * dests.len() {
            return Err(TransportError::ShapeMismatch {
                expected: origins.len() * dests.len(),
                found: weights.len(),
            });
        }
        if let Some(&v) = revenue.iter().chain(&consumption).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(TransportError::InvalidMarginal(v));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(TransportError::InvalidWeight);
        }
        Ok(Self {
            product,
            origins,
            dests,
            revenue,
            consumption,
            weights,
            balance_factor: 1.0,
        })
    }

    pub fn weight(&self, o: usize, d: usize) -> f64 {
        self.weights[o * self.dests.len() + d]
    }

    fn check_balanced(&self) -> Result<(), TransportError> {
        let supply: f64 = self.revenue.iter().sum();
        let demand: f64 = self.consumption.iter().sum();
        if (supply - demand).abs() > 1e-9 * supply.max(demand) {
            return Err(TransportError::Unbalanced { supply, demand });
        }
        Ok(())
    }
}

/// Sparse-by-construction allocation of one product, stored dense.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub product: BrandId,
    pub origins: Vec<CountryCode>,
    pub dests: Vec<CountryCode>,
    /// Row-major origins × destinations, USD.
    pub x: Vec<f64>,
    pub balance_factor: f64,
}

impl Allocation {
    fn from_problem(p: &TransportProblem, x: Vec<f64>) -> Self {
        Self {
            product: p.product.clone(),
            origins: p.origins.clone(),
            dests: p.dests.clone(),
            x,
            balance_factor: p.balance_factor,
        }
    }

    pub fn get(&self, o: usize, d: usize) -> f64 {
        self.x[o * self.dests.len() + d]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.x.chunks(self.dests.len().max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.dests.len();
        (0..n).map(|d| (0..self.origins.len()).map(|o| self.get(o, d)).sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }

    /// Σ W X under the weights of `problem`.
    pub fn objective(&self, problem: &TransportProblem) -> f64 {
        self.x.iter().zip(&problem.weights).map(|(x, w)| x * w).sum()
    }

    pub fn nonzeros(&self) -> usize {
        self.x.iter().filter(|v| **v > 0.0).count()
    }

    /// Nonzero cells as (origin, dest, value).
    pub fn triplets(&self) -> impl Iterator<Item = (&CountryCode, &CountryCode, f64)> {
        let n = self.dests.len();
        self.x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(move |(k, v)| (&self.origins[k / n], &self.dests[k % n], *v))
    }

    /// Allocation to the origin's own country.
    pub fn domestic(&self, o: usize) -> f64 {
        self.dests
            .iter()
            .position(|d| *d == self.origins[o])
            .map_or(0.0, |d| self.get(o, d))
    }

    /// Largest relative violation of either marginal of `problem`.
    pub fn marginal_violation(&self, problem: &TransportProblem) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let rows = self.row_sums().into_iter().zip(&problem.revenue).map(|(a, b)| rel(a, *b));
        let cols = self.col_sums().into_iter().zip(&problem.consumption).map(|(a, b)| rel(a, *b));
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// W_od = 1 / max(D_od, floor), with the floor as the distance of every
/// domestic pair. Row-major origins × destinations.
pub fn cost_weights(
    dyads: &BTreeMap<(CountryCode, CountryCode), DyadRecord>,
    origins: &[CountryCode],
    dests: &[CountryCode],
    domestic_floor_km: f64,
) -> Result<Vec<f64>, TransportError> {
    if !(domestic_floor_km > 0.0) {
        return Err(TransportError::NonPositiveFloor(domestic_floor_km));
    }
    let mut w = Vec::with_capacity(origins.len() * dests.len());
    for o in origins {
        for d in dests {
            let dist = if o == d {
                domestic_floor_km
            } else {
                let rec = dyads.get(&(o.clone(), d.clone())).ok_or_else(|| TransportError::MissingDistance {
                    origin: o.clone(),
                    dest: d.clone(),
                })?;
                if !(rec.dist_km > 0.0) {
                    return Err(TransportError::NonPositiveDistance {
                        origin: o.clone(),
                        dest: d.clone(),
                        dist: rec.dist_km,
                    });
                }
                rec.dist_km.max(domestic_floor_km)
            };
            w.push(1.0 / dist);
        }
    }
    Ok(w)
}

/// Scales consumption so both marginals carry the revenue total.
pub fn balance(mut problem: TransportProblem) -> Result<TransportProblem, TransportError> {
    let supply: f64 = problem.revenue.iter().sum();
    let demand: f64 = problem.consumption.iter().sum();
    if supply == 0.0 {
        if demand == 0.0 {
            return Ok(problem);
        }
        // Nothing produced: there is no revenue to place anywhere.
        problem.consumption.iter_mut().for_each(|c| *c = 0.0);
        problem.balance_factor = 0.0;
        return Ok(problem);
    }
    if demand == 0.0 {
        return Err(TransportError::NothingToAllocate {
            product: problem.product.clone(),
            revenue: supply,
        });
    }
    let factor = supply / demand;
    if factor != 1.0 {
        problem.consumption.iter_mut().for_each(|c| *c *= factor);
    }
    problem.balance_factor *= factor;
    Ok(problem)
}

/// Exact optimum of the transportation problem.
pub fn solve_transport(problem: &TransportProblem) -> Result<Allocation, TransportError> {
    problem.check_balanced()?;
    let x = simplex::solve_dense(&problem.revenue, &problem.consumption, &problem.weights)?;
    Ok(Allocation::from_problem(problem, x))
}

/// Nearest-source heuristic: destinations in descending consumption order,
/// each filled from the highest-weight origin with capacity left.
pub fn greedy_allocate(problem: &TransportProblem) -> Result<Allocation, TransportError> {
    problem.check_balanced()?;
    let (m, n) = (problem.origins.len(), problem.dests.len());
    let mut cap = problem.revenue.clone();
    let mut x = vec![0.0; m * n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| problem.consumption[b].total_cmp(&problem.consumption[a]));
    for d in order {
        let mut need = problem.consumption[d];
        while need > 0.0 {
            let best = (0..m)
                .filter(|&o| cap[o] > 0.0)
                .max_by(|&a, &b| problem.weight(a, d).total_cmp(&problem.weight(b, d)).then(b.cmp(&a)));
            let Some(o) = best else { break };
            let q = need.min(cap[o]);
            x[o * n + d] += q;
            cap[o] -= q;
            need -= q;
            if cap[o] <= 0.0 {
                cap[o] = 0.0;
            }
        }
    }
    Ok(Allocation::from_problem(problem, x))
}

/// Moves every revenue entry to the parent of the firm that booked it.
pub fn reassign_to_parent(ds: &Dataset) -> Result<RevenueLedger, TransportError> {
    let mut out = RevenueLedger::default();
    for ((firm, brand, year), v) in &ds.revenue.entries {
        let f = ds
            .firms
            .get(firm)
            .ok_or_else(|| TransportError::DanglingParent(firm.to_string()))?;
        let parent = ds
            .firms
            .get(&f.parent_id)
            .ok_or_else(|| TransportError::DanglingParent(firm.to_string()))?;
        *out.entries
            .entry((parent.firm_id.clone(), brand.clone(), *year))
            .or_insert(0.0) += *v;
    }
    Ok(out)
}

/// Which solver [`allocate_year`] uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Solver {
    #[default]
    Exact,
    Greedy,
}

/// Problems for every brand with revenue or consumption in `year`, keyed by
/// brand. Origins are the countries of the firms booking the revenue.
pub fn build_problems(
    ds: &Dataset,
    ledger: &RevenueLedger,
    consumption: &ConsumptionMatrix,
    year: Year,
    domestic_floor_km: f64,
) -> Result<BTreeMap<BrandId, TransportProblem>, TransportError> {
    let mut revenue: BTreeMap<BrandId, BTreeMap<CountryCode, f64>> = BTreeMap::new();
    for ((firm, brand, y), v) in &ledger.entries {
        if *y != year {
            continue;
        }
        let f = ds
            .firms
            .get(firm)
            .ok_or_else(|| TransportError::DanglingParent(firm.to_string()))?;
        *revenue.entry(brand.clone()).or_default().entry(f.country.clone()).or_insert(0.0) += *v;
    }
    let mut demand: BTreeMap<BrandId, BTreeMap<CountryCode, f64>> = BTreeMap::new();
    for ((brand, dest, y), e) in &consumption.entries {
        if *y == year {
            *demand.entry(brand.clone()).or_default().entry(dest.clone()).or_insert(0.0) += e.value;
        }
    }
    let mut brands: Vec<BrandId> = revenue.keys().chain(demand.keys()).cloned().collect();
    brands.sort();
    brands.dedup();
    let mut out = BTreeMap::new();
    for b in brands {
        let r = revenue.remove(&b).unwrap_or_default();
        let c = demand.remove(&b).unwrap_or_default();
        let origins: Vec<CountryCode> = r.keys().cloned().collect();
        let dests: Vec<CountryCode> = c.keys().cloned().collect();
        let w = cost_weights(&ds.dyads, &origins, &dests, domestic_floor_km)?;
        let p = TransportProblem::new(b.clone(), origins, dests, r.into_values().collect(), c.into_values().collect(), w)?;
        out.insert(b, p);
    }
    Ok(out)
}

/// Balances and solves every product of one year in parallel.
pub fn allocate_year(
    ds: &Dataset,
    ledger: &RevenueLedger,
    consumption: &ConsumptionMatrix,
    year: Year,
    domestic_floor_km: f64,
    solver: Solver,
) -> Result<BTreeMap<BrandId, Allocation>, TransportError> {
    let problems = build_problems(ds, ledger, consumption, year, domestic_floor_km)?;
    let solved: Result<Vec<(BrandId, Allocation)>, TransportError> = problems
        .into_par_iter()
        .map(|(b, p)| {
            let p = balance(p)?;
            let a = match solver {
                Solver::Exact => solve_transport(&p)?,
                Solver::Greedy => greedy_allocate(&p)?,
            };
            Ok((b, a))
        })
        .collect();
    Ok(solved?.into_iter().collect())
}

/// One bilateral trade flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRow {
    pub year: Year,
    pub brand: BrandId,
    pub sector: String,
    pub origin: CountryCode,
    pub dest: CountryCode,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Off-diagonal cells of every allocation. Bounds start equal to the point
/// estimate; [`BoundsReport::apply`] widens them.
pub fn extract_flows(
    allocations: &BTreeMap<BrandId, Allocation>,
    brands: &BTreeMap<BrandId, BrandRecord>,
    year: Year,
) -> Vec<FlowRow> {
    let mut out = Vec::new();
    for (b, a) in allocations {
        let sector = brands.get(b).map(|r| r.sector.clone()).unwrap_or_default();
        for (o, d, v) in a.triplets() {
            if o != d {
                out.push(FlowRow {
                    year,
                    brand: b.clone(),
                    sector: sector.clone(),
                    origin: o.clone(),
                    dest: d.clone(),
                    value: v,
                    lower: v,
                    upper: v,
                });
            }
        }
    }
    out
}
