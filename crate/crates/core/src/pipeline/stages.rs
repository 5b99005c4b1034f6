//! Stage bodies. Each reads the dataset and earlier intermediates and writes
//! its own CSV outputs.

use std::collections::{BTreeMap, BTreeSet};

use super::tables::{
    allocation_file, num, opt_num, read_allocations, read_consumption, read_csv, read_flows, read_training_table,
    write_allocations, write_consumption, write_csv, write_flows, write_training_table,
};
use super::{report, AllocationMode, PipelineError, RunContext, Stage};
use crate::analytics::{
    self, cagr, country_decoupling, deficit_offset, eigenvector_centrality, flow_matrix, group_trends, lorenz,
    random_basket_entropy, reference_upper_bound, shannon_entropy, top_share, AnalyticsError, DEFAULT_TELEPORT,
};
use crate::boost::{
    build_training_table, clean_training_set_with, fit_model, predict_all, rank_features, reference_year, run_cv,
    summarize, tune, BoostError, CvKind, HyperParams, Learner, Regressor, TrainedModel, ZERO_THRESHOLD_USD,
};
use crate::complexity::{complexity_of, digital_matrix, merge_digital, physical_matrix, DIGITAL_PREFIX};
use crate::data_model::{
    load_dataset, load_raw, BrandId, ConsumptionMatrix, CountryCode, DataError, Dataset, Provenance, Year,
};
use crate::features::{select_top, FeatureContext, FEATURE_NAMES};
use crate::harmonize::{harmonize, HarmonizationTargets, HarmonizeOptions};
use crate::transport::{allocate_year, confidence_bounds, extract_flows, reassign_to_parent, FlowRow};

pub(crate) const VALIDATION_REPORT: &str = "validation_report.csv";
pub(crate) const FEATURES: &str = "features.csv";
pub(crate) const CLEANED_BRANDS: &str = "cleaned_brands.csv";
pub(crate) const MODEL: &str = "model.txt";
pub(crate) const IMPORTANCE: &str = "importance.csv";
pub(crate) const TUNING: &str = "tuning.csv";
pub(crate) const CV_REPORT: &str = "cv_report.csv";
pub(crate) const CV_BASELINE: &str = "cv_baseline.csv";
pub(crate) const CV_SUMMARY: &str = "cv_summary.csv";
pub(crate) const PREDICTED: &str = "predicted_consumption.csv";
pub(crate) const HARMONIZED: &str = "harmonized_consumption.csv";
pub(crate) const FLOWS: &str = "flows.csv";
pub(crate) const BOUNDS_SUMMARY: &str = "bounds_summary.csv";
pub(crate) const TRADE_VOLUME: &str = "trade_volume.csv";
pub(crate) const TRADE_GROWTH: &str = "trade_growth.csv";
pub(crate) const COUNTRY_TRADE: &str = "country_trade.csv";
pub(crate) const SECTOR_SHARES: &str = "sector_shares.csv";
pub(crate) const CONCENTRATION: &str = "concentration.csv";
pub(crate) const LORENZ: &str = "lorenz.csv";
pub(crate) const CENTRALITY: &str = "centrality.csv";
pub(crate) const DECOUPLING: &str = "decoupling.csv";
pub(crate) const GROUP_TRENDS: &str = "group_trends.csv";
pub(crate) const UPPER_BOUND: &str = "upper_bound.csv";
pub(crate) const ECI: &str = "eci.csv";
pub(crate) const PCI: &str = "pci.csv";

pub(crate) fn run(stage: Stage, ctx: &mut RunContext) -> Result<(), PipelineError> {
    match stage {
        Stage::Validate => validate(ctx),
        Stage::Features => features(ctx),
        Stage::Train => train(ctx),
        Stage::Cv => cv(ctx),
        Stage::Predict => predict(ctx),
        Stage::Harmonize => harmonize_stage(ctx),
        Stage::Allocate => allocate(ctx),
        Stage::Bounds => bounds(ctx),
        Stage::Analyze => analyze(ctx),
        Stage::Complexity => complexity(ctx),
        Stage::Report => report::write_charts(ctx),
    }
}

fn dataset(ctx: &RunContext, stage: Stage) -> Result<Dataset, PipelineError> {
    load_dataset(&ctx.cfg.paths()).map_err(|e| PipelineError::stage(stage, e))
}

/// Configured years clipped to the dataset's range.
fn years(ctx: &RunContext, ds: &Dataset) -> Vec<Year> {
    let (a, b) = match ctx.cfg.years {
        Some([a, b]) => (a.max(ds.first_year), b.min(ds.last_year)),
        None => (ds.first_year, ds.last_year),
    };
    (a..=b).collect()
}

fn read_model(ctx: &RunContext, stage: Stage) -> Result<TrainedModel, PipelineError> {
    let path = ctx.require(MODEL, Stage::Train)?;
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    TrainedModel::from_text(&text).map_err(|e| PipelineError::stage(stage, e))
}

fn validate(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let raw = load_raw(&ctx.cfg.paths()).map_err(|e| PipelineError::stage(Stage::Validate, e))?;
    let report = crate::data_model::validate(&raw);
    write_csv(
        &ctx.path(VALIDATION_REPORT),
        &["location", "message"],
        report.entries.iter().map(|v| vec![v.location.clone(), v.message.clone()]),
    )?;
    if !report.is_empty() {
        return Err(PipelineError::stage(Stage::Validate, DataError::Invalid(report)));
    }
    Ok(())
}

fn features(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Features;
    let ds = dataset(ctx, st)?;
    let year = reference_year(&ds).ok_or_else(|| PipelineError::stage(st, BoostError::NoObservedData(ds.last_year)))?;
    let m = &ctx.cfg.model;
    let report = clean_training_set_with(&ds, year, m.min_brand_revenue, m.min_peer_correlation)
        .map_err(|e| PipelineError::stage(st, e))?;
    let mut status: BTreeMap<&BrandId, (&str, Option<f64>)> = BTreeMap::new();
    for b in &report.kept {
        status.insert(b, ("kept", report.peer_correlation.get(b).copied()));
    }
    for b in &report.removed_small {
        status.insert(b, ("small", None));
    }
    for (b, r) in &report.removed_outliers {
        status.insert(b, ("outlier", Some(*r)));
    }
    write_csv(
        &ctx.path(CLEANED_BRANDS),
        &["brand_id", "status", "peer_correlation"],
        status
            .iter()
            .map(|(b, (s, r))| vec![b.to_string(), s.to_string(), opt_num(*r)]),
    )?;
    let fctx = FeatureContext::new(&ds, ctx.cfg.allocation.domestic_floor_km);
    let table = build_training_table(&fctx, year, &report.kept).map_err(|e| PipelineError::stage(st, e))?;
    write_training_table(&ctx.path(FEATURES), &table)
}

fn train(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Train;
    let table = read_training_table(&ctx.require(FEATURES, Stage::Features)?)?;
    let seed = ctx.cfg.seed()?;
    let m = ctx.cfg.model.clone();
    let all: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let n_brands = table.keys.iter().map(|k| &k.0).collect::<BTreeSet<_>>().len();
    let grid = m.grid();
    let base = m.base_params();
    let cells = grid.cells();

    let (params, tuning) = if cells.len() == 1 {
        (HyperParams::with_cell(cells[0].0, cells[0].1), Vec::new())
    } else if n_brands >= 2 {
        tune(&table, &grid, &all, base).map_err(|e| PipelineError::stage(st, e))?
    } else {
        ctx.note(st, "fewer than two products; tuning skipped, default tree shape used");
        (base, Vec::new())
    };
    let params = HyperParams {
        learn_rate: base.learn_rate,
        n_cycles: base.n_cycles,
        ..params
    };
    write_csv(
        &ctx.path(TUNING),
        &["max_splits", "min_parent", "mean_mse", "selected"],
        tuning.iter().map(|c| {
            let chosen = c.max_splits == params.max_splits && c.min_parent == params.min_parent;
            vec![
                c.max_splits.to_string(),
                c.min_parent.to_string(),
                num(c.mean_mse),
                u8::from(chosen).to_string(),
            ]
        }),
    )?;

    let importance = match rank_features(&table, params, m.shuffles, seed) {
        Ok(imp) => imp,
        Err(BoostError::TooFewGroups { .. }) => {
            ctx.note(st, "fewer than two products; importance skipped, all covariates kept");
            BTreeMap::new()
        }
        Err(e) => return Err(PipelineError::stage(st, e)),
    };
    // Undefined scores rank last.
    let ranked: BTreeMap<String, f64> = importance
        .iter()
        .map(|(k, v)| (k.clone(), if v.is_finite() { *v } else { f64::NEG_INFINITY }))
        .collect();
    let selected: Vec<String> = if ranked.values().any(|v| v.is_finite()) {
        select_top(&ranked, m.top_k.min(ranked.len()))
            .map_err(|e| PipelineError::stage(st, e))?
            .names()
    } else {
        if !importance.is_empty() {
            ctx.note(st, "importance undefined on the validation products; all covariates kept");
        }
        all.clone()
    };
    let order = select_top(&ranked, ranked.len()).map(|s| s.names()).unwrap_or_default();
    write_csv(
        &ctx.path(IMPORTANCE),
        &["feature", "importance", "rank", "selected"],
        order.iter().enumerate().map(|(i, f)| {
            vec![
                f.clone(),
                num(importance[f]),
                (i + 1).to_string(),
                u8::from(selected.contains(f)).to_string(),
            ]
        }),
    )?;

    let model = fit_model(&table.x, &table.y_usd, Learner::Boosted(params), &selected, table.year)
        .map_err(|e| PipelineError::stage(st, e))?;
    let path = ctx.path(MODEL);
    std::fs::write(&path, model.to_text()).map_err(|e| PipelineError::io(&path, e))
}

const CV_HEADER: [&str; 8] = ["kind", "fold", "n_test", "r2", "restricted_r2", "accuracy", "f1", "mse"];

fn cv(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Cv;
    let table = read_training_table(&ctx.require(FEATURES, Stage::Features)?)?;
    let model = read_model(ctx, st)?;
    let params = match &model.regressor {
        Regressor::Boosted(e) => e.params,
        Regressor::Ols(_) => ctx.cfg.model.base_params(),
    };
    let mut summary = Vec::new();
    for (learner, name, file) in [
        (Learner::Boosted(params), "boosted", CV_REPORT),
        (Learner::Ols, "ols", CV_BASELINE),
    ] {
        let mut rows = Vec::new();
        for kind in [CvKind::Loco, CvKind::Lopo] {
            match run_cv(&table, kind, learner, &model.features) {
                Ok(folds) => {
                    for f in &folds {
                        rows.push(vec![
                            kind.as_str().to_string(),
                            f.key.clone(),
                            f.n_test.to_string(),
                            num(f.r2),
                            num(f.restricted_r2),
                            num(f.accuracy),
                            num(f.f1),
                            num(f.mse),
                        ]);
                    }
                    let s = summarize(&folds);
                    summary.push(vec![
                        name.to_string(),
                        kind.as_str().to_string(),
                        folds.len().to_string(),
                        num(s.r2),
                        num(s.restricted_r2),
                        num(s.accuracy),
                        num(s.f1),
                        num(s.mse),
                    ]);
                }
                Err(e @ BoostError::TooFewGroups { .. }) => ctx.note(st, format!("{name} {}: {e}", kind.as_str())),
                Err(e) if learner == Learner::Ols => ctx.note(st, format!("baseline {}: {e}", kind.as_str())),
                Err(e) => return Err(PipelineError::stage(st, e)),
            }
        }
        write_csv(&ctx.path(file), &CV_HEADER, rows)?;
    }
    write_csv(
        &ctx.path(CV_SUMMARY),
        &["learner", "kind", "folds", "r2", "restricted_r2", "accuracy", "f1", "mse"],
        summary,
    )
}

fn predict(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Predict;
    let ds = dataset(ctx, st)?;
    let model = read_model(ctx, st)?;
    let fctx = FeatureContext::new(&ds, ctx.cfg.allocation.domestic_floor_km);
    let years = years(ctx, &ds);
    let predicted = predict_all(&model, &fctx, &years, ZERO_THRESHOLD_USD).map_err(|e| PipelineError::stage(st, e))?;
    let mut merged = ConsumptionMatrix::default();
    for ((b, c, y), e) in &predicted.entries {
        match ds.consumption.entries.get(&(b.clone(), c.clone(), *y)) {
            Some(o) if o.provenance == Provenance::Observed => {
                merged.insert(b.clone(), c.clone(), *y, o.value, Provenance::Observed)
            }
            _ => merged.insert(b.clone(), c.clone(), *y, e.value, Provenance::Predicted),
        }
    }

    // Rows with revenue but no consumption above the threshold cannot be
    // harmonized; they fall back to the unthresholded predictions, and to an
    // even spread when even those vanish.
    let targets = HarmonizationTargets::from_dataset(&ds);
    let mut row_sum: BTreeMap<(BrandId, Year), f64> = BTreeMap::new();
    for ((b, _, y), e) in &merged.entries {
        *row_sum.entry((b.clone(), *y)).or_insert(0.0) += e.value;
    }
    let empty: Vec<(BrandId, Year)> = row_sum
        .into_iter()
        .filter(|((b, y), s)| *s == 0.0 && targets.brand_target(b, *y) > 0.0)
        .map(|(k, _)| k)
        .collect();
    if !empty.is_empty() {
        let raw = predict_all(&model, &fctx, &years, 0.0).map_err(|e| PipelineError::stage(st, e))?;
        for (b, y) in empty {
            let row: Vec<(CountryCode, f64)> = ds
                .countries
                .keys()
                .map(|c| (c.clone(), raw.get(&b, c, y).unwrap_or(0.0)))
                .collect();
            let total: f64 = row.iter().map(|r| r.1).sum();
            if total > 0.0 {
                ctx.note(st, format!("{b} {y}: no prediction above the zero threshold, unthresholded values used"));
            } else {
                ctx.note(st, format!("{b} {y}: all predictions zero, consumption spread evenly"));
            }
            for (c, v) in row {
                let v = if total > 0.0 { v } else { 1.0 };
                merged.insert(b.clone(), c, y, v, Provenance::Predicted);
            }
        }
    }
    write_consumption(&ctx.path(PREDICTED), &merged)
}

fn harmonize_stage(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Harmonize;
    let ds = dataset(ctx, st)?;
    let predicted = read_consumption(&ctx.require(PREDICTED, Stage::Predict)?)?;
    let targets = HarmonizationTargets::from_dataset(&ds);
    let h = harmonize(&predicted, &targets, &HarmonizeOptions::default()).map_err(|e| PipelineError::stage(st, e))?;
    write_consumption(&ctx.path(HARMONIZED), &h)
}

/// Years that have an allocation file in the output directory.
fn allocation_years(ctx: &RunContext, years: &[Year]) -> Vec<Year> {
    years
        .iter()
        .copied()
        .filter(|y| ctx.path(&allocation_file(*y)).is_file())
        .collect()
}

fn allocate(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Allocate;
    let ds = dataset(ctx, st)?;
    let consumption = read_consumption(&ctx.require(HARMONIZED, Stage::Harmonize)?)?;
    let ledger = match ctx.cfg.allocation.mode {
        AllocationMode::Subsidiary => ds.revenue.clone(),
        AllocationMode::ParentHq => reassign_to_parent(&ds).map_err(|e| PipelineError::stage(st, e))?,
    };
    let cons_years = consumption.years();
    let years = years(ctx, &ds);
    // Drop files of years outside the current range so later stages only
    // see this run's allocations.
    for y in ds.first_year..=ds.last_year {
        let p = ctx.path(&allocation_file(y));
        if !years.contains(&y) && p.is_file() {
            std::fs::remove_file(&p).map_err(|e| PipelineError::io(&p, e))?;
        }
    }
    for year in years {
        if !cons_years.contains(&year) {
            ctx.note(st, format!("no harmonized consumption for {year}"));
            continue;
        }
        let a = &ctx.cfg.allocation;
        let allocs = allocate_year(&ds, &ledger, &consumption, year, a.domestic_floor_km, a.solver())
            .map_err(|e| PipelineError::stage(st, e))?;
        write_allocations(&ctx.path(&allocation_file(year)), &allocs)?;
    }
    Ok(())
}

fn bounds(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Bounds;
    let ds = dataset(ctx, st)?;
    let all_years = years(ctx, &ds);
    let years = allocation_years(ctx, &all_years);
    if years.is_empty() {
        return Err(PipelineError::MissingIntermediate {
            file: allocation_file(all_years.first().copied().unwrap_or(ds.first_year)),
            stage: Stage::Allocate,
        });
    }
    let a = &ctx.cfg.allocation;
    let mut flows = Vec::new();
    let mut summary = Vec::new();
    for year in years {
        let allocs = read_allocations(&ctx.path(&allocation_file(year)))?;
        let report =
            confidence_bounds(&allocs, &ds.brands, a.ci_level, a.grouping()).map_err(|e| PipelineError::stage(st, e))?;
        let mut rows = extract_flows(&allocs, &ds.brands, year);
        report.apply(&mut rows);
        flows.extend(rows);
        for (g, iv) in &report.intervals {
            summary.push(match iv {
                Some(iv) => vec![
                    year.to_string(),
                    g.clone(),
                    iv.n.to_string(),
                    num(iv.mean),
                    num(iv.sd),
                    num(iv.lower),
                    num(iv.upper),
                ],
                None => vec![year.to_string(), g.clone(), "1".into(), String::new(), String::new(), String::new(), String::new()],
            });
        }
        for (g, _) in report.intervals.iter().filter(|(_, iv)| iv.is_none()) {
            ctx.note(st, format!("{year} {g}: fewer than two domestic shares, bounds equal the point estimate"));
        }
    }
    write_flows(&ctx.path(FLOWS), &flows)?;
    write_csv(
        &ctx.path(BOUNDS_SUMMARY),
        &["year", "group", "n", "mean_share", "sd_share", "lower_share", "upper_share"],
        summary,
    )
}

/// The flow table, or an error naming the stage that produces it.
pub(crate) fn require_flows(ctx: &RunContext) -> Result<Vec<FlowRow>, PipelineError> {
    let p = ctx.path(FLOWS);
    if !p.is_file() {
        let any_allocation = std::fs::read_dir(&ctx.out)
            .map(|d| {
                d.filter_map(Result::ok)
                    .any(|e| e.file_name().to_string_lossy().starts_with("allocation_"))
            })
            .unwrap_or(false);
        return Err(PipelineError::MissingIntermediate {
            file: FLOWS.to_string(),
            stage: if any_allocation { Stage::Bounds } else { Stage::Allocate },
        });
    }
    read_flows(&p)
}

#[derive(serde::Deserialize)]
struct ReferenceRecord {
    country: String,
    year: Year,
    value_usd: f64,
}

fn analyze(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Analyze;
    let flows = require_flows(ctx)?;
    let ds = dataset(ctx, st)?;
    let years: Vec<Year> = years(ctx, &ds)
        .into_iter()
        .filter(|y| flows.iter().any(|f| f.year == *y))
        .collect();
    let cfg = ctx.cfg.analytics.clone();
    let seed = ctx.cfg.seed()?;
    let countries = ds.country_codes();
    let physical_by_year = |y: Year| -> (BTreeMap<CountryCode, f64>, BTreeMap<CountryCode, f64>) {
        let mut ex = BTreeMap::new();
        let mut im = BTreeMap::new();
        if let Some(p) = &ds.physical {
            for ((o, d, _, yy), v) in &p.entries {
                if *yy == y && o != d {
                    *ex.entry(o.clone()).or_insert(0.0) += v;
                    *im.entry(d.clone()).or_insert(0.0) += v;
                }
            }
        }
        (ex, im)
    };

    // Volumes and growth.
    let mut volume = Vec::new();
    let mut totals = BTreeMap::new();
    for &y in &years {
        let rows: Vec<&FlowRow> = flows.iter().filter(|f| f.year == y).collect();
        let (v, lo, hi) = rows
            .iter()
            .fold((0.0, 0.0, 0.0), |(v, l, u), f| (v + f.value, l + f.lower, u + f.upper));
        let world = ds.revenue.world_total(y);
        totals.insert(y, v);
        volume.push(vec![
            y.to_string(),
            num(v),
            num(lo),
            num(hi),
            num(world),
            num(if world > 0.0 { v / world } else { f64::NAN }),
        ]);
    }
    write_csv(
        &ctx.path(TRADE_VOLUME),
        &["year", "trade_usd", "lower_usd", "upper_usd", "world_revenue_usd", "traded_share"],
        volume,
    )?;
    let mut growth = Vec::new();
    if let (Some(&y0), Some(&y1)) = (years.first(), years.last()) {
        if y1 > y0 {
            match cagr(totals[&y0], totals[&y1], (y1 - y0) as u32) {
                Ok(g) => growth.push(vec![y0.to_string(), y1.to_string(), num(g)]),
                Err(e) => ctx.note(st, format!("trade growth: {e}")),
            }
        }
    }
    write_csv(&ctx.path(TRADE_GROWTH), &["from_year", "to_year", "cagr"], growth)?;

    // Balances per country.
    let mut country_rows = Vec::new();
    for &y in &years {
        let ex = analytics::exports_by_country(&flows, y);
        let im = analytics::imports_by_country(&flows, y);
        let (pex, pim) = physical_by_year(y);
        for c in &countries {
            let e = ex.get(c).copied().unwrap_or(0.0);
            let i = im.get(c).copied().unwrap_or(0.0);
            let digital_net = analytics::trade_balance(e, i);
            let mut row = vec![y.to_string(), c.to_string(), num(e), num(i), num(digital_net)];
            if ds.physical.is_some() {
                let pn = analytics::trade_balance(
                    pex.get(c).copied().unwrap_or(0.0),
                    pim.get(c).copied().unwrap_or(0.0),
                );
                row.push(num(pn));
                row.push(num(analytics::combined_balance(pn, digital_net)));
                row.push(if pn < 0.0 { num(deficit_offset(pn, digital_net)) } else { String::new() });
            } else {
                row.extend([String::new(), String::new(), String::new()]);
            }
            country_rows.push(row);
        }
    }
    write_csv(
        &ctx.path(COUNTRY_TRADE),
        &[
            "year",
            "country",
            "exports_usd",
            "imports_usd",
            "balance_usd",
            "physical_balance_usd",
            "combined_balance_usd",
            "deficit_offset",
        ],
        country_rows,
    )?;

    // Sector composition.
    let by_sector = analytics::aggregate(&flows, &[analytics::FlowKey::Year, analytics::FlowKey::Sector]);
    let shares = analytics::sector_shares(&flows);
    write_csv(
        &ctx.path(SECTOR_SHARES),
        &["year", "sector", "value_usd", "share"],
        shares.iter().filter(|((y, _), _)| years.contains(y)).map(|((y, s), share)| {
            vec![
                y.to_string(),
                s.clone(),
                num(by_sector.values[&vec![y.to_string(), s.clone()]]),
                num(*share),
            ]
        }),
    )?;

    if cfg.concentration {
        let mut conc = Vec::new();
        let mut curves = Vec::new();
        for &y in &years {
            let ex = analytics::exports_by_country(&flows, y);
            let digital: Vec<f64> = countries.iter().map(|c| ex.get(c).copied().unwrap_or(0.0)).collect();
            let (pex, _) = physical_by_year(y);
            let mut kinds = vec![("digital", digital)];
            if ds.physical.is_some() {
                kinds.push(("physical", countries.iter().map(|c| pex.get(c).copied().unwrap_or(0.0)).collect()));
            }
            for (kind, values) in kinds {
                let (Ok(h), Ok((k, frac)), Ok(curve)) =
                    (shannon_entropy(&values), top_share(&values, 0.8), lorenz(&values))
                else {
                    ctx.note(st, format!("concentration {kind} {y}: no exports"));
                    continue;
                };
                let basket = match (&ds.physical, kind) {
                    (Some(p), "digital") => {
                        let target: f64 = values.iter().sum();
                        match random_basket_entropy(p, y, target, cfg.random_basket_trials, seed) {
                            Ok(e) => Some(e),
                            Err(e) => {
                                ctx.note(st, format!("random basket {y}: {e}"));
                                None
                            }
                        }
                    }
                    _ => None,
                };
                conc.push(vec![
                    y.to_string(),
                    kind.to_string(),
                    num(h),
                    k.to_string(),
                    num(frac),
                    opt_num(basket),
                ]);
                for (x, v) in curve {
                    curves.push(vec![y.to_string(), kind.to_string(), num(x), num(v)]);
                }
            }
        }
        write_csv(
            &ctx.path(CONCENTRATION),
            &["year", "kind", "entropy", "top80_countries", "top80_fraction", "random_basket_entropy"],
            conc,
        )?;
        write_csv(&ctx.path(LORENZ), &["year", "kind", "x", "y"], curves)?;
    }

    if cfg.centrality {
        let mut rows = Vec::new();
        for &y in &years {
            let (names, m) = flow_matrix(&flows, y);
            let scores = match eigenvector_centrality(&m, names.len(), None) {
                Err(AnalyticsError::ReducibleGraph) => {
                    ctx.note(st, format!("centrality {y}: flow graph reducible, teleport {DEFAULT_TELEPORT} added"));
                    eigenvector_centrality(&m, names.len(), Some(DEFAULT_TELEPORT))
                }
                other => other,
            };
            match scores {
                Ok(s) => rows.extend(names.iter().zip(s).map(|(c, v)| vec![y.to_string(), c.to_string(), num(v)])),
                Err(e) => ctx.note(st, format!("centrality {y}: {e}")),
            }
        }
        write_csv(&ctx.path(CENTRALITY), &["year", "country", "centrality"], rows)?;
    }

    if cfg.decoupling {
        let mut dec_rows = Vec::new();
        let mut trend_rows = Vec::new();
        match (years.first(), years.last()) {
            (Some(&y0), Some(&y1)) if y1 > y0 => {
                let records = country_decoupling(&ds, y0, y1, cfg.basis());
                for r in &records {
                    dec_rows.push(vec![
                        r.country.to_string(),
                        r.basis.as_str().to_string(),
                        num(r.gdp_change),
                        num(r.em_change),
                        num(r.di),
                        u8::from(r.decoupled).to_string(),
                    ]);
                }
                for (group, decoupled) in [("decoupled", true), ("not_decoupled", false)] {
                    match group_trends(&ds, &flows, &records, decoupled, cfg.high_income_only, y1) {
                        Ok(t) => trend_rows.extend(t.into_iter().filter(|g| years.contains(&g.year)).map(|g| {
                            vec![
                                group.to_string(),
                                g.year.to_string(),
                                g.n.to_string(),
                                num(g.digital_mean),
                                num(g.digital_se),
                                opt_num(g.physical_mean),
                                opt_num(g.physical_se),
                            ]
                        })),
                        Err(e) => ctx.note(st, format!("group trends: {e}")),
                    }
                }
            }
            _ => ctx.note(st, "decoupling needs at least two years"),
        }
        write_csv(
            &ctx.path(DECOUPLING),
            &["country", "basis", "gdp_change", "emissions_change", "di", "decoupled"],
            dec_rows,
        )?;
        write_csv(
            &ctx.path(GROUP_TRENDS),
            &["group", "year", "n", "digital_mean", "digital_se", "physical_mean", "physical_se"],
            trend_rows,
        )?;
    }

    if cfg.upper_bound {
        match &ctx.cfg.input.reference_exports {
            None => ctx.note(st, "no reference exports configured; upper bound skipped"),
            Some(path) => {
                let mut reference: BTreeMap<Year, BTreeMap<CountryCode, f64>> = BTreeMap::new();
                for r in read_csv::<ReferenceRecord>(path)? {
                    *reference.entry(r.year).or_default().entry(CountryCode(r.country)).or_insert(0.0) += r.value_usd;
                }
                let mut rows = Vec::new();
                for &y in &years {
                    let Some(refs) = reference.get(&y) else { continue };
                    let own = analytics::exports_by_country(&flows, y);
                    match reference_upper_bound(&own, refs) {
                        Ok(adj) => {
                            for (c, v) in &adj {
                                rows.push(vec![
                                    y.to_string(),
                                    c.to_string(),
                                    num(own.get(c).copied().unwrap_or(0.0)),
                                    num(refs.get(c).copied().unwrap_or(0.0)),
                                    num(*v),
                                ]);
                            }
                        }
                        Err(e) => ctx.note(st, format!("upper bound {y}: {e}")),
                    }
                }
                write_csv(
                    &ctx.path(UPPER_BOUND),
                    &["year", "country", "exports_usd", "reference_usd", "adjusted_usd"],
                    rows,
                )?;
            }
        }
    }
    Ok(())
}

fn complexity(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let st = Stage::Complexity;
    let flows = require_flows(ctx)?;
    if !ctx.cfg.analytics.complexity {
        ctx.note(st, "disabled in configuration");
        return Ok(());
    }
    let ds = dataset(ctx, st)?;
    let mut eci_rows = Vec::new();
    let mut pci_rows = Vec::new();
    for y in years(ctx, &ds) {
        let digital = digital_matrix(&flows, y);
        let matrix = match &ds.physical {
            Some(p) => merge_digital(&physical_matrix(p, y), &digital),
            None => Ok(digital),
        };
        match matrix.and_then(|m| complexity_of(&m)) {
            Ok((_, s)) => {
                for i in 0..s.countries.len() {
                    eci_rows.push(vec![y.to_string(), s.countries[i].clone(), num(s.eci[i]), num(s.eci_minmax[i])]);
                }
                for j in 0..s.activities.len() {
                    pci_rows.push(vec![
                        y.to_string(),
                        s.activities[j].clone(),
                        num(s.pci[j]),
                        num(s.pci_minmax[j]),
                        u8::from(s.activities[j].starts_with(DIGITAL_PREFIX)).to_string(),
                    ]);
                }
            }
            Err(e) => ctx.note(st, format!("{y}: {e}")),
        }
    }
    write_csv(&ctx.path(ECI), &["year", "country", "eci", "eci_minmax"], eci_rows)?;
    write_csv(&ctx.path(PCI), &["year", "activity", "pci", "pci_minmax", "is_digital"], pci_rows)
}
