//! Export bounds from a normal-approximation interval on domestic shares.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};

use super::{Allocation, FlowRow, TransportError};
use crate::data_model::{BrandId, BrandRecord, CountryCode};
use crate::stats::{mean, sample_sd};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// How domestic-share observations are pooled into intervals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShareGrouping {
    /// One interval across every (firm, product) pair.
    #[default]
    Pooled,
    /// One interval per parent firm across its products.
    PerFirm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShareInterval {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ShareInterval {
    /// mean ± z·sd/√n at `level`. Fewer than two shares give no interval.
    pub fn from_shares(shares: &[f64], level: f64) -> Result<Option<Self>, TransportError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(TransportError::InvalidLevel(level));
        }
        if shares.len() < 2 {
            return Ok(None);
        }
        let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        let m = mean(shares);
        let sd = sample_sd(shares);
        let half = z * sd / (shares.len() as f64).sqrt();
        Ok(Some(Self {
            n: shares.len(),
            mean: m,
            sd,
            lower: m - half,
            upper: m + half,
        }))
    }
}

/// Export totals of one (product, origin) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ExportBounds {
    pub group: String,
    pub revenue: f64,
    pub domestic_share: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub level: f64,
    pub grouping: ShareGrouping,
    /// Interval per group; `None` when the group had fewer than two shares.
    pub intervals: BTreeMap<String, Option<ShareInterval>>,
    pub exports: BTreeMap<(BrandId, CountryCode), ExportBounds>,
}

impl BoundsReport {
    /// Splits each pair's export bounds over its flows in proportion to the
    /// point estimates.
    pub fn apply(&self, flows: &mut [FlowRow]) {
        for f in flows {
            let Some(e) = self.exports.get(&(f.brand.clone(), f.origin.clone())) else {
                continue;
            };
            if e.point > 0.0 {
                let share = f.value / e.point;
                f.lower = (e.lower * share).min(f.value);
                f.upper = (e.upper * share).max(f.value);
            }
        }
    }

    /// Summed (point, lower, upper) exports.
    pub fn totals(&self) -> (f64, f64, f64) {
        self.exports
            .values()
            .fold((0.0, 0.0, 0.0), |(p, l, u), e| (p + e.point, l + e.lower, u + e.upper))
    }
}

const POOLED: &str = "pooled";

/// Domestic shares X_oo / R_o over every (product, origin) with revenue,
/// turned into export bounds: the interval's lower share bounds exports from
/// above and its upper share from below, both clamped to [0, R_o] and
/// widened to include the point estimate.
pub fn confidence_bounds(
    allocations: &BTreeMap<BrandId, Allocation>,
    brands: &BTreeMap<BrandId, BrandRecord>,
    level: f64,
    grouping: ShareGrouping,
) -> Result<BoundsReport, TransportError> {
    let mut rows = Vec::new();
    let mut shares: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (b, a) in allocations {
        let group = match grouping {
            ShareGrouping::Pooled => POOLED.to_string(),
            ShareGrouping::PerFirm => brands.get(b).map_or_else(|| b.to_string(), |r| r.parent_firm_id.to_string()),
        };
        let sums = a.row_sums();
        for (o, &r) in sums.iter().enumerate() {
            if r <= 0.0 {
                continue;
            }
            let dom = a.domestic(o);
            let exports: f64 = (0..a.dests.len())
                .filter(|&d| a.dests[d] != a.origins[o])
                .map(|d| a.get(o, d))
                .sum();
            let s = dom / r;
            shares.entry(group.clone()).or_default().push(s);
            rows.push((b.clone(), a.origins[o].clone(), group.clone(), r, s, exports));
        }
    }
    let mut intervals = BTreeMap::new();
    for (g, s) in &shares {
        let iv = ShareInterval::from_shares(s, level)?;
        if iv.is_none() {
            log::debug!("group {g}: fewer than two domestic shares, bounds collapse to the point estimate");
        }
        intervals.insert(g.clone(), iv);
    }
    let mut exports = BTreeMap::new();
    for (b, o, g, r, s, point) in rows {
        let (lower, upper) = match &intervals[&g] {
            Some(iv) => (
                ((1.0 - iv.upper) * r).clamp(0.0, r).min(point),
                ((1.0 - iv.lower) * r).clamp(0.0, r).max(point),
            ),
            None => (point, point),
        };
        exports.insert(
            (b, o),
            ExportBounds {
                group: g,
                revenue: r,
                domestic_share: s,
                point,
                lower,
                upper,
            },
        );
    }
    Ok(BoundsReport {
        level,
        grouping,
        intervals,
        exports,
    })
}
