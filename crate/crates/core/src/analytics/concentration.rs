//! Lorenz curves, top shares, Shannon entropy and random-basket baselines.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::AnalyticsError;
use crate::data_model::{CountryCode, PhysicalTrade, Year};
use crate::transport::FlowRow;

pub const DEFAULT_TRIALS: usize = 1000;

fn check(values: &[f64]) -> Result<f64, AnalyticsError> {
    if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(AnalyticsError::InvalidValue(v));
    }
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Err(AnalyticsError::AllZero);
    }
    Ok(total)
}

/// Points (k/n, share held by the k smallest values), from (0,0) to (1,1).
pub fn lorenz(values: &[f64]) -> Result<Vec<(f64, f64)>, AnalyticsError> {
    let total = check(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push((0.0, 0.0));
    let mut cum = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        out.push(((k + 1) as f64 / n, cum / total));
    }
    // Pin the end point against rounding in the running sum.
    if let Some(last) = out.last_mut() {
        *last = (1.0, 1.0);
    }
    Ok(out)
}

/// Smallest number of largest values holding at least `mass` of the total,
/// with its fraction of all values.
pub fn top_share(values: &[f64], mass: f64) -> Result<(usize, f64), AnalyticsError> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(AnalyticsError::InvalidMass(mass));
    }
    let total = check(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let goal = mass * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        if cum >= goal {
            return Ok((k + 1, (k + 1) as f64 / sorted.len() as f64));
        }
    }
    Ok((sorted.len(), 1.0))
}

/// −Σ y ln y over market shares y, with 0 ln 0 = 0.
pub fn shannon_entropy(values: &[f64]) -> Result<f64, AnalyticsError> {
    let total = check(values)?;
    let h = values
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| {
            let y = v / total;
            -y * y.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Entropy of exports by origin, pooled over every flow of `year`.
pub fn pooled_entropy(flows: &[FlowRow], year: Year) -> Result<f64, AnalyticsError> {
    let by_origin = super::exports_by_country(flows, year);
    shannon_entropy(&by_origin.into_values().collect::<Vec<_>>())
}

/// Mean pooled-export entropy of random HS4 baskets whose total trade first
/// reaches `target_total`. Trial `t` draws from its own stream of `seed`.
pub fn random_basket_entropy(
    physical: &PhysicalTrade,
    year: Year,
    target_total: f64,
    trials: usize,
    seed: u64,
) -> Result<f64, AnalyticsError> {
    let by_product = physical.exports_by_product(year);
    if by_product.is_empty() {
        return Err(AnalyticsError::NoPhysicalData);
    }
    let mut products: BTreeMap<&str, Vec<(&CountryCode, f64)>> = BTreeMap::new();
    for ((c, p), v) in &by_product {
        products.entry(p.as_str()).or_default().push((c, *v));
    }
    let products: Vec<(f64, Vec<(&CountryCode, f64)>)> = products
        .into_values()
        .map(|rows| (rows.iter().map(|r| r.1).sum(), rows))
        .collect();
    let total: f64 = products.iter().map(|p| p.0).sum();
    if target_total > total {
        return Err(AnalyticsError::TargetExceedsTotal {
            target: target_total,
            total,
        });
    }
    if trials == 0 {
        return Err(AnalyticsError::InvalidPeriod);
    }
    let entropies: Result<Vec<f64>, AnalyticsError> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut order: Vec<usize> = (0..products.len()).collect();
            order.shuffle(&mut rng);
            let mut exports: BTreeMap<&CountryCode, f64> = BTreeMap::new();
            let mut cum = 0.0;
            for i in order {
                for (c, v) in &products[i].1 {
                    *exports.entry(c).or_insert(0.0) += v;
                }
                cum += products[i].0;
                if cum >= target_total {
                    break;
                }
            }
            shannon_entropy(&exports.into_values().collect::<Vec<_>>())
        })
        .collect();
    let e = entropies?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn top_share_examples() {
        assert_eq!(top_share(&[80.0, 10.0, 5.0, 5.0], 0.8).unwrap(), (1, 0.25));
        for n in 1..40 {
            let (k, _) = top_share(&vec![3.0; n], 0.8).unwrap();
            assert_eq!(k, (0.8 * n as f64).ceil() as usize, "n = {n}");
        }
        assert_eq!(top_share(&[0.0, 0.0], 0.8), Err(AnalyticsError::AllZero));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[0.0, 7.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[2.0; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((shannon_entropy(&[0.5, 0.5, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(shannon_entropy(&[]), Err(AnalyticsError::AllZero));
    }

    fn physical(rows: &[(&str, &str, &str, f64)]) -> PhysicalTrade {
        let mut p = PhysicalTrade::default();
        for &(o, d, hs, v) in rows {
            p.entries.insert((o.into(), d.into(), hs.into(), 2020), v);
        }
        p
    }

    #[test]
    fn single_product_basket() {
        let p = physical(&[("A", "B", "0101", 3.0), ("B", "A", "0101", 1.0)]);
        let e = random_basket_entropy(&p, 2020, 2.0, 50, 9).unwrap();
        assert!((e - shannon_entropy(&[3.0, 1.0]).unwrap()).abs() < 1e-15);
        assert!(matches!(
            random_basket_entropy(&p, 2020, 5.0, 50, 9),
            Err(AnalyticsError::TargetExceedsTotal { .. })
        ));
    }

    #[test]
    fn basket_is_deterministic() {
        let p = physical(&[
            ("A", "B", "0101", 3.0),
            ("B", "A", "0202", 1.0),
            ("C", "A", "0303", 2.0),
            ("A", "C", "0404", 5.0),
        ]);
        let a = random_basket_entropy(&p, 2020, 4.0, 200, 3).unwrap();
        assert_eq!(a, random_basket_entropy(&p, 2020, 4.0, 200, 3).unwrap());
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(v in prop::collection::vec(0.0f64..1e6, 1..30)) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let h = shannon_entropy(&v).unwrap();
            let k = v.iter().filter(|x| **x > 0.0).count() as f64;
            prop_assert!(h >= 0.0 && h <= k.ln() + 1e-12);
        }

        #[test]
        fn lorenz_is_convex(v in prop::collection::vec(0.0f64..1e6, 1..30)) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let c = lorenz(&v).unwrap();
            prop_assert_eq!(c[0], (0.0, 0.0));
            prop_assert_eq!(*c.last().unwrap(), (1.0, 1.0));
            let slopes: Vec<f64> = c.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
            prop_assert!(slopes.iter().all(|s| *s >= -1e-12));
            prop_assert!(slopes.windows(2).all(|s| s[1] >= s[0] - 1e-9));
        }
    }
}
