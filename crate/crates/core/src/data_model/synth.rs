//! Deterministic gravity-consistent synthetic worlds.
//!
//! True consumption of brand `b` in destination `d` is
//! `K * scale_b * gdp_d * adoption(internet_d) / dist(origin_b, d)^alpha_s`
//! times log-normal noise, where adoption is a logistic curve in the internet
//! share and the distance exponent depends on the brand's sector. A zero mask then removes the pairs with the lowest noisy
//! gravity score until the requested zero fraction is reached, so that zeros
//! are predictable from the same covariates. Brand world revenue is the sum
//! of true consumption, split across the firms of the owning group.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::types::*;
use super::DataError;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_countries: usize,
    pub n_firms: usize,
    pub n_brands: usize,
    pub n_sectors: usize,
    pub zero_rate: f64,
    pub distance_exponent: f64,
    /// Sector distance exponents are `distance_exponent * exp(u)` with
    /// `u ~ U(-spread, spread)`, so some sectors trade far more locally.
    pub distance_exponent_spread: f64,
    /// Log-scale spread of brand size.
    pub brand_scale_sd: f64,
    /// Internet share at which demand reaches half its saturation level.
    pub adoption_midpoint: f64,
    /// Steepness of the adoption curve; 0 makes demand proportional to the
    /// internet share instead.
    pub adoption_steepness: f64,
    /// Fraction of countries with observed consumption (at least two).
    pub observed_share: f64,
    /// Fraction of firms that are subsidiaries.
    pub subsidiary_share: f64,
    pub first_year: Year,
    pub last_year: Year,
    /// Number of HS4 products in the physical-trade table; 0 disables it.
    pub n_hs4: usize,
}

impl SynthSpec {
    pub fn new(seed: u64, n_countries: usize, n_firms: usize, n_brands: usize, n_sectors: usize, zero_rate: f64) -> Self {
        Self {
            seed,
            n_countries,
            n_firms,
            n_brands,
            n_sectors,
            zero_rate,
            distance_exponent: 1.0,
            distance_exponent_spread: 1.0,
            brand_scale_sd: 3.0,
            adoption_midpoint: 0.55,
            adoption_steepness: 8.0,
            observed_share: 0.6,
            subsidiary_share: 0.3,
            first_year: 2016,
            last_year: 2021,
            n_hs4: 12,
        }
    }
}

/// Generates a valid synthetic dataset with default secondary settings.
pub fn synth_world(
    seed: u64,
    n_countries: usize,
    n_firms: usize,
    n_brands: usize,
    n_sectors: usize,
    zero_rate: f64,
) -> Result<Dataset, DataError> {
    synth_world_with(&SynthSpec::new(seed, n_countries, n_firms, n_brands, n_sectors, zero_rate))
}

fn country_code(i: usize) -> CountryCode {
    let a = (b'A' + ((i / 676) % 26) as u8) as char;
    let b = (b'A' + ((i / 26) % 26) as u8) as char;
    let c = (b'A' + (i % 26) as u8) as char;
    CountryCode(format!("{a}{b}{c}"))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const INTERNAL_DIST_KM: f64 = 200.0;
const REGION_CENTERS: [(f64, f64); 5] = [(5000.0, 3000.0), (1500.0, 5500.0), (8500.0, 6000.0), (5500.0, 8000.0), (9500.0, 1500.0)];

pub fn synth_world_with(spec: &SynthSpec) -> Result<Dataset, DataError> {
    if spec.n_countries < 2 || spec.n_firms < 2 || spec.n_brands < 2 || spec.n_sectors < 2 {
        return Err(DataError::Synth("counts must be at least 2".into()));
    }
    if spec.n_sectors > SECTORS.len() {
        return Err(DataError::Synth(format!("at most {} sectors", SECTORS.len())));
    }
    if !(0.0..1.0).contains(&spec.zero_rate) {
        return Err(DataError::Synth("zero_rate must be in [0,1)".into()));
    }
    if spec.first_year > spec.last_year {
        return Err(DataError::Synth("empty year range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let gauss = |rng: &mut ChaCha8Rng, mean: f64, sd: f64| mean + sd * std_normal.sample(rng);
    let ref_year = spec.last_year;
    let n = spec.n_countries;

    // Countries.
    let codes: Vec<CountryCode> = (0..n).map(country_code).collect();
    let mut regions = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    let mut countries = BTreeMap::new();
    let mut gdp_ref = Vec::with_capacity(n);
    let mut internet_ref = Vec::with_capacity(n);
    for code in &codes {
        let region = rng.random_range(0..REGIONS.len());
        let (cx, cy) = REGION_CENTERS[region];
        coords.push((gauss(&mut rng, cx, 900.0), gauss(&mut rng, cy, 900.0)));
        regions.push(region);
        let gdp_pc0 = gauss(&mut rng, 9.5, 0.9).exp();
        let pop0 = gauss(&mut rng, 16.0, 1.3).exp();
        let gdp_growth = gauss(&mut rng, 0.025, 0.02);
        let pop_growth = gauss(&mut rng, 0.01, 0.005);
        let em_pc0 = gauss(&mut rng, 1.5, 0.6).exp() * 1e-3;
        let em_trend = gauss(&mut rng, 0.0, 0.03);
        let cons_ratio = gauss(&mut rng, 1.0, 0.1).max(0.5);
        let ict_shift = gauss(&mut rng, 0.0, 0.4);
        let fixed_shift = gauss(&mut rng, 0.0, 0.7);
        let mobile_shift = gauss(&mut rng, 0.0, 0.7);
        let mut years = BTreeMap::new();
        for y in spec.first_year..=spec.last_year {
            let t = (y - spec.first_year) as f64;
            let gdp_pc = gdp_pc0 * (1.0 + gdp_growth).powf(t);
            let pop = pop0 * (1.0 + pop_growth).powf(t);
            let z = (gdp_pc.ln() - 9.5) * 1.2 + ict_shift + 0.1 * t;
            let em_prod = em_pc0 * (1.0 + em_trend).powf(t) * pop;
            years.insert(
                y,
                CountryYear {
                    gdp_ppp: gdp_pc * pop,
                    population: pop,
                    internet_share: logistic(z + 0.5),
                    fixed_bb_share: 0.5 * logistic(z - 1.0 + fixed_shift),
                    mobile_bb_share: logistic(z + mobile_shift),
                    emissions_prod: Some(em_prod),
                    emissions_cons: Some(em_prod * cons_ratio),
                },
            );
        }
        gdp_ref.push(years[&ref_year].gdp_ppp);
        internet_ref.push(years[&ref_year].internet_share);
        countries.insert(
            code.clone(),
            CountryRecord {
                code: code.clone(),
                region: REGIONS[region].to_string(),
                years,
            },
        );
    }

    // Dyads, symmetric, with internal-distance rows on the diagonal.
    let mut dist = vec![vec![INTERNAL_DIST_KM; n]; n];
    let mut dyads = BTreeMap::new();
    for i in 0..n {
        for j in i..n {
            let rec = if i == j {
                DyadRecord {
                    dist_km: INTERNAL_DIST_KM,
                    ..DyadRecord::domestic(&codes[i], INTERNAL_DIST_KM)
                }
            } else {
                let (xi, yi) = coords[i];
                let (xj, yj) = coords[j];
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt().max(50.0);
                dist[i][j] = d;
                dist[j][i] = d;
                let same_region = regions[i] == regions[j];
                let comlang_official = rng.random_bool(if same_region { 0.3 } else { 0.05 });
                let colony_ever = rng.random_bool(0.03);
                DyadRecord {
                    origin: codes[i].clone(),
                    dest: codes[j].clone(),
                    dist_km: d,
                    contiguity: d < 800.0,
                    comlang_official,
                    comlang_ethno: comlang_official || rng.random_bool(0.1),
                    colony_ever,
                    comcol_post45: rng.random_bool(0.05),
                    curcol: colony_ever && rng.random_bool(0.1),
                    col_post45: colony_ever && rng.random_bool(0.5),
                    same_country_ever: rng.random_bool(0.02),
                }
            };
            let mut back = rec.clone();
            back.origin = codes[j].clone();
            back.dest = codes[i].clone();
            dyads.insert((codes[j].clone(), codes[i].clone()), back);
            dyads.insert((codes[i].clone(), codes[j].clone()), rec);
        }
    }

    // Firms: parents concentrated in large economies, subsidiaries anywhere.
    let n_subs = ((spec.n_firms as f64) * spec.subsidiary_share).round() as usize;
    let n_parents = (spec.n_firms - n_subs.min(spec.n_firms - 1)).max(1);
    let parent_weights: Vec<f64> = gdp_ref.iter().map(|g| g.powf(0.5)).collect();
    let weight_total: f64 = parent_weights.iter().sum();
    let pick_weighted = |rng: &mut ChaCha8Rng| {
        let mut u = rng.random::<f64>() * weight_total;
        for (i, w) in parent_weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        n - 1
    };
    let mut firms = BTreeMap::new();
    let mut groups: Vec<Vec<(FirmId, f64)>> = Vec::new();
    let mut parent_country = Vec::new();
    for p in 0..n_parents {
        let id = FirmId(format!("F{p:04}"));
        let c = pick_weighted(&mut rng);
        parent_country.push(c);
        firms.insert(
            id.clone(),
            FirmRecord {
                firm_id: id.clone(),
                parent_id: id.clone(),
                country: codes[c].clone(),
            },
        );
        groups.push(vec![(id, 1.0)]);
    }
    for s in 0..spec.n_firms - n_parents {
        let p = rng.random_range(0..n_parents);
        let mut c = rng.random_range(0..n);
        if c == parent_country[p] {
            c = (c + 1) % n;
        }
        let id = FirmId(format!("F{:04}", n_parents + s));
        firms.insert(
            id.clone(),
            FirmRecord {
                firm_id: id.clone(),
                parent_id: groups[p][0].0.clone(),
                country: codes[c].clone(),
            },
        );
        let w = rng.random_range(0.2..1.5);
        groups[p].push((id, w));
    }

    // Brands.
    let spread = spec.distance_exponent_spread.abs();
    let sector_alpha: Vec<f64> = (0..spec.n_sectors)
        .map(|_| spec.distance_exponent * rng.random_range(-spread..=spread).exp())
        .collect();
    let mut brands = BTreeMap::new();
    let mut brand_group = Vec::with_capacity(spec.n_brands);
    let mut brand_sector = Vec::with_capacity(spec.n_brands);
    let mut brand_scale = Vec::with_capacity(spec.n_brands);
    let mut brand_growth = Vec::with_capacity(spec.n_brands);
    let mut order: Vec<usize> = (0..n_parents).collect();
    order.shuffle(&mut rng);
    for b in 0..spec.n_brands {
        let g = if b < n_parents { order[b] } else { rng.random_range(0..n_parents) };
        let id = BrandId(format!("B{b:04}"));
        let sector = rng.random_range(0..spec.n_sectors);
        brands.insert(
            id.clone(),
            BrandRecord {
                brand_id: id,
                parent_firm_id: groups[g][0].0.clone(),
                sector: SECTORS[sector].to_string(),
            },
        );
        brand_group.push(g);
        brand_sector.push(sector);
        brand_scale.push(gauss(&mut rng, 0.0, spec.brand_scale_sd).exp());
        brand_growth.push(gauss(&mut rng, 0.15, 0.08));
    }

    // True reference-year consumption with a predictable zero mask.
    let mean_gdp = gdp_ref.iter().sum::<f64>() / n as f64;
    let k = 2e7;
    let mut truth = vec![vec![0.0; n]; spec.n_brands];
    let mut score = Vec::with_capacity(spec.n_brands * n);
    for b in 0..spec.n_brands {
        let o = parent_country[brand_group[b]];
        let alpha = sector_alpha[brand_sector[b]];
        for d in 0..n {
            let adoption = if spec.adoption_steepness > 0.0 {
                logistic(spec.adoption_steepness * (internet_ref[d] - spec.adoption_midpoint))
            } else {
                internet_ref[d]
            };
            let gravity = brand_scale[b] * (gdp_ref[d] / mean_gdp) * adoption / (dist[o][d] / 1000.0).powf(alpha);
            truth[b][d] = k * gravity * gauss(&mut rng, 0.0, 0.4).exp();
            score.push((gravity.ln() + gauss(&mut rng, 0.0, 0.5), b, d));
        }
    }
    let n_zero = (spec.zero_rate * score.len() as f64).round() as usize;
    score.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut best = vec![(f64::NEG_INFINITY, 0usize); spec.n_brands];
    for &(s, b, d) in &score {
        if s > best[b].0 {
            best[b] = (s, d);
        }
    }
    for &(_, b, d) in score.iter().take(n_zero) {
        if best[b].1 != d {
            truth[b][d] = 0.0;
        }
    }

    // Revenue ledger: brand world revenue split across the group's firms.
    let mut revenue = RevenueLedger::default();
    for b in 0..spec.n_brands {
        let world_ref: f64 = truth[b].iter().sum();
        let group = &groups[brand_group[b]];
        let wsum: f64 = group.iter().map(|(_, w)| w).sum();
        for y in spec.first_year..=spec.last_year {
            let total = world_ref * (1.0 + brand_growth[b]).powf((y - ref_year) as f64);
            let mut assigned = 0.0;
            for (i, (firm, w)) in group.iter().enumerate() {
                let v = if i + 1 == group.len() {
                    (total - assigned).max(0.0)
                } else {
                    total * w / wsum
                };
                assigned += v;
                revenue
                    .entries
                    .insert((firm.clone(), BrandId(format!("B{b:04}")), y), v);
            }
        }
    }

    // Observed consumption for a random subset of countries.
    let n_obs = ((spec.observed_share * n as f64).round() as usize).clamp(2, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut observed: Vec<usize> = idx[..n_obs].to_vec();
    observed.sort_unstable();
    let mut consumption = ConsumptionMatrix::default();
    for b in 0..spec.n_brands {
        for &d in &observed {
            consumption.insert(
                BrandId(format!("B{b:04}")),
                codes[d].clone(),
                ref_year,
                truth[b][d],
                Provenance::Observed,
            );
        }
    }

    // Physical trade: product-specific gravity with sparse specialization.
    let physical = if spec.n_hs4 == 0 {
        None
    } else {
        let mut pt = PhysicalTrade::default();
        let affinity: Vec<Vec<f64>> = (0..spec.n_hs4)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            0.0
                        } else {
                            gauss(&mut rng, 0.0, 1.0).exp()
                        }
                    })
                    .collect()
            })
            .collect();
        for y in spec.first_year..=spec.last_year {
            let t = (y - spec.first_year) as f64;
            for (p, aff) in affinity.iter().enumerate() {
                let hs4 = format!("{:04}", 101 + p * 7);
                for o in 0..n {
                    if aff[o] == 0.0 {
                        continue;
                    }
                    let go = countries[&codes[o]].years[&y].gdp_ppp;
                    for d in 0..n {
                        if d == o {
                            continue;
                        }
                        let gd = countries[&codes[d]].years[&y].gdp_ppp;
                        let v = 3e-3 * aff[o] * (go / 1e9).powf(0.8) * (gd / 1e9).powf(0.8) * 1e9 / (dist[o][d] / 1000.0)
                            * (1.0 + 0.06 * t);
                        pt.entries.insert((codes[o].clone(), codes[d].clone(), hs4.clone(), y), v);
                    }
                }
            }
        }
        Some(pt)
    };

    Ok(Dataset {
        countries,
        dyads,
        firms,
        brands,
        revenue,
        consumption,
        physical,
        first_year: spec.first_year,
        last_year: spec.last_year,
    })
}
