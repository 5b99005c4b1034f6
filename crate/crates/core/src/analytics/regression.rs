//! Least squares with heteroskedasticity-robust (HC1) standard errors, and the
//! reference-based upper bound on country exports.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::AnalyticsError;
use crate::data_model::CountryCode;

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionResult {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n: usize,
}

/// OLS of `y` on the columns of `x` (which must include any intercept).
pub fn ols_robust(y: &[f64], x: &DMatrix<f64>) -> Result<RegressionResult, AnalyticsError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(AnalyticsError::MissingData(format!("{} targets for {n} rows", y.len())));
    }
    if n <= k {
        return Err(AnalyticsError::TooFewObservations { n, k });
    }
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(AnalyticsError::RankDeficient);
    }
    let xtx = x.transpose() * x;
    let bread = xtx.try_inverse().ok_or(AnalyticsError::RankDeficient)?;
    let yv = DVector::from_column_slice(y);
    let beta = &bread * (x.transpose() * &yv);
    let resid = &yv - x * &beta;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * (resid[i] * resid[i]);
    }
    let cov = &bread * meat * &bread * (n as f64 / (n - k) as f64);
    let ybar = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - k) as f64;
    Ok(RegressionResult {
        coef: beta.iter().copied().collect(),
        se: (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        r2,
        adj_r2,
        n,
    })
}

/// Fits ln(own) = a + b ln(reference) over countries positive on both sides
/// and raises every country with a positive reference to at least its
/// prediction.
pub fn reference_upper_bound(
    own: &BTreeMap<CountryCode, f64>,
    reference: &BTreeMap<CountryCode, f64>,
) -> Result<BTreeMap<CountryCode, f64>, AnalyticsError> {
    if reference.values().all(|v| *v <= 0.0) {
        return Ok(own.clone());
    }
    let pairs: Vec<(f64, f64)> = own
        .iter()
        .filter(|(_, v)| **v > 0.0)
        .filter_map(|(c, v)| reference.get(c).filter(|r| **r > 0.0).map(|r| (r.ln(), v.ln())))
        .collect();
    if pairs.len() < 3 {
        return Err(AnalyticsError::InsufficientOverlap(pairs.len()));
    }
    let x = DMatrix::from_fn(pairs.len(), 2, |i, j| if j == 0 { 1.0 } else { pairs[i].0 });
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let fit = ols_robust(&y, &x)?;
    let mut out = own.clone();
    for (c, r) in reference {
        if *r > 0.0 {
            let pred = (fit.coef[0] + fit.coef[1] * r.ln()).exp();
            let v = out.entry(c.clone()).or_insert(0.0);
            *v = v.max(pred);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] })
    }

    /// Hand computation for (0,1),(1,2),(2,2),(3,4),(4,4): X'X = [[5,10],[10,30]],
    /// its inverse [[0.6,−0.2],[−0.2,0.1]], residuals (0,0.2,−0.6,0.6,−0.2),
    /// meat Σe²x x' = [[0.8,2.0],[2.0,5.36]], HC0 = [[0.0224,−0.0032],
    /// [−0.0032,0.0056]], scaled by 5/3.
    #[test]
    fn five_point_hc1() {
        let r = ols_robust(&[1.0, 2.0, 2.0, 4.0, 4.0], &design(&[0.0, 1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!((r.coef[0] - 1.0).abs() < 1e-12 && (r.coef[1] - 0.8).abs() < 1e-12);
        let se0 = (0.0224f64 * 5.0 / 3.0).sqrt();
        let se1 = (0.0056f64 * 5.0 / 3.0).sqrt();
        assert!((r.se[0] - se0).abs() < 1e-10);
        assert!((r.se[1] - se1).abs() < 1e-10);
    }

    #[test]
    fn exact_fit() {
        let r = ols_robust(&[3.0, 5.0, 7.0, 9.0], &design(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(r.se.iter().all(|s| s.abs() < 1e-7));
        assert!((r.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_keep_coefficients() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 2.0, 4.0, 4.0];
        let a = ols_robust(&y, &design(&xs)).unwrap();
        let xs2: Vec<f64> = xs.iter().chain(&xs).copied().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let b = ols_robust(&y2, &design(&xs2)).unwrap();
        for (p, q) in a.coef.iter().zip(&b.coef) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_normal_equations() {
        let xs = [0.3, 1.7, 2.2, 3.9, 4.1, 5.5];
        let y = [1.0, 2.5, 2.0, 4.4, 4.0, 6.1];
        let r = ols_robust(&y, &design(&xs)).unwrap();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|v| v * v).sum();
        let sxy: f64 = xs.iter().zip(&y).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        assert!((r.coef[1] - slope).abs() < 1e-10 && (r.coef[0] - icpt).abs() < 1e-10);
    }

    #[test]
    fn rank_and_size_errors() {
        let x = DMatrix::from_fn(4, 2, |i, _| i as f64);
        assert_eq!(ols_robust(&[1.0, 2.0, 3.0, 4.0], &x), Err(AnalyticsError::RankDeficient));
        assert!(matches!(
            ols_robust(&[1.0, 2.0], &design(&[1.0, 2.0])),
            Err(AnalyticsError::TooFewObservations { .. })
        ));
    }

    fn map(rows: &[(&str, f64)]) -> BTreeMap<CountryCode, f64> {
        rows.iter().map(|(c, v)| (CountryCode::from(*c), *v)).collect()
    }

    #[test]
    fn upper_bound_examples() {
        let reference = map(&[("A", 1.0), ("B", 2.0), ("C", 4.0), ("D", 8.0)]);
        // own = 3 · reference², exactly log-linear.
        let own = map(&[("A", 3.0), ("B", 12.0), ("C", 48.0), ("D", 192.0)]);
        let adj = reference_upper_bound(&own, &reference).unwrap();
        for (c, v) in &own {
            assert!((adj[c] - v).abs() < 1e-9 * v);
        }

        let mut own2 = own.clone();
        own2.insert("E".into(), 0.0);
        let mut ref2 = reference.clone();
        ref2.insert("E".into(), 16.0);
        let adj = reference_upper_bound(&own2, &ref2).unwrap();
        assert!((adj[&CountryCode::from("E")] - 3.0 * 256.0).abs() < 1e-6);

        let zeros = map(&[("A", 0.0), ("B", 0.0)]);
        assert_eq!(reference_upper_bound(&own, &zeros).unwrap(), own);
        assert_eq!(
            reference_upper_bound(&map(&[("A", 1.0)]), &map(&[("A", 1.0)])),
            Err(AnalyticsError::InsufficientOverlap(1))
        );
    }
}
