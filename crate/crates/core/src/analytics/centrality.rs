//! Eigenvector centrality as the stationary distribution of a random walk
//! over combined export and import flows.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::AnalyticsError;
use crate::data_model::{CountryCode, Year};
use crate::transport::FlowRow;

/// Uniform jump probability used when the flow graph is reducible.
pub const DEFAULT_TELEPORT: f64 = 1e-3;

const TOL: f64 = 1e-12;
const MAX_ITER: usize = 200_000;

/// Dense origin × destination matrix of `year`'s flows over every country
/// that trades.
pub fn flow_matrix(flows: &[FlowRow], year: Year) -> (Vec<CountryCode>, Vec<f64>) {
    let countries: Vec<CountryCode> = flows
        .iter()
        .filter(|f| f.year == year)
        .flat_map(|f| [f.origin.clone(), f.dest.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx: BTreeMap<&CountryCode, usize> = countries.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let n = countries.len();
    let mut m = vec![0.0; n * n];
    for f in flows.iter().filter(|f| f.year == year) {
        m[idx[&f.origin] * n + idx[&f.dest]] += f.value;
    }
    (countries, m)
}

/// Scores summing to one. The walk moves from a country to a partner in
/// proportion to their combined two-way flow; a lazy step removes
/// periodicity. Without `teleport`, countries with positive flow must form
/// one connected component.
pub fn eigenvector_centrality(flows: &[f64], n: usize, teleport: Option<f64>) -> Result<Vec<f64>, AnalyticsError> {
    if let Some(&v) = flows.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(AnalyticsError::InvalidValue(v));
    }
    if n == 0 || flows.len() != n * n || flows.iter().all(|v| *v == 0.0) {
        return Err(AnalyticsError::NoFlows);
    }
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[i * n + j] = flows[i * n + j] + flows[j * n + i];
            }
        }
    }
    let strength: Vec<f64> = (0..n).map(|j| (0..n).map(|i| s[i * n + j]).sum()).collect();
    let active: Vec<bool> = strength.iter().map(|v| *v > 0.0).collect();
    if teleport.is_none() && !connected(&s, n, &active) {
        return Err(AnalyticsError::ReducibleGraph);
    }
    let alpha = teleport.unwrap_or(0.0);
    let n_active = active.iter().filter(|a| **a).count() as f64;
    let mut pi: Vec<f64> = match teleport {
        Some(_) => vec![1.0 / n as f64; n],
        None => active.iter().map(|a| if *a { 1.0 / n_active } else { 0.0 }).collect(),
    };
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITER {
        // next = P pi with P column-stochastic; dangling mass jumps uniformly.
        let mut dangling = 0.0;
        next.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            if strength[j] > 0.0 {
                let w = pi[j] / strength[j];
                for i in 0..n {
                    next[i] += s[i * n + j] * w;
                }
            } else {
                dangling += pi[j];
            }
        }
        let mut change = 0.0;
        for i in 0..n {
            let step = match teleport {
                Some(_) => (1.0 - alpha) * (next[i] + dangling / n as f64) + alpha / n as f64,
                None => next[i],
            };
            let v = 0.5 * (pi[i] + step);
            change += (v - pi[i]).abs();
            next[i] = v;
        }
        std::mem::swap(&mut pi, &mut next);
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);
        if change < TOL {
            return Ok(pi);
        }
    }
    Err(AnalyticsError::NonConvergence(MAX_ITER))
}

fn connected(s: &[f64], n: usize, active: &[bool]) -> bool {
    let Some(start) = (0..n).find(|&i| active[i]) else {
        return false;
    };
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && s[i * n + j] > 0.0 {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    (0..n).all(|i| !active[i] || seen[i])
}
