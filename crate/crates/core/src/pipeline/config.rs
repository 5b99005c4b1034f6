//! Pipeline configuration, read from TOML.
//!
//! ```toml
//! seed = 42                  # required by the stochastic stages
//! out = "out"                # relative paths resolve against the config file
//! years = [2016, 2021]       # optional; defaults to the dataset's range
//! stages = ["validate", "features"]   # optional; defaults to every stage
//!
//! [input]
//! dir = "data"               # countries.csv, dyads.csv, ... (see README)
//! reference_exports = "ref.csv"       # optional: country,year,value_usd
//!
//! [model]
//! learn_rate = 0.1
//! n_cycles = 150
//! max_splits = [1, 3, 5, 10, 15, 20, 30, 50]
//! min_parent = [3, 5, 7, 10]
//! top_k = 11
//! shuffles = 5
//! min_brand_revenue = 1e7
//! min_peer_correlation = 0.3
//!
//! [allocation]
//! mode = "subsidiary"        # or "parent_hq"
//! solver = "exact"           # or "greedy"
//! domestic_floor_km = 1.0
//! ci_level = 0.95
//! grouping = "pooled"        # or "per_firm"
//!
//! [analytics]
//! concentration = true
//! random_basket_trials = 1000
//! centrality = true
//! decoupling = true
//! emissions_basis = "production"   # or "consumption"
//! high_income_only = false
//! upper_bound = true
//! complexity = true
//! ```
//!
//! Every key except `seed` and `input.dir` is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};
use crate::analytics::{EmissionsBasis, DEFAULT_TRIALS};
use crate::boost::{HyperGrid, HyperParams, MIN_BRAND_REVENUE, MIN_PEER_CORRELATION};
use crate::data_model::{DatasetPaths, Year};
use crate::transport::{ShareGrouping, Solver, DEFAULT_DOMESTIC_FLOOR_KM, DEFAULT_LEVEL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    /// Revenue stays with the firm (parent or subsidiary) that books it.
    #[default]
    Subsidiary,
    /// All revenue of a group moves to its parent's country.
    ParentHq,
}

impl AllocationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Subsidiary => "subsidiary",
            Self::ParentHq => "parent_hq",
        }
    }
}

impl std::str::FromStr for AllocationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "subsidiary" => Ok(Self::Subsidiary),
            "parent_hq" => Ok(Self::ParentHq),
            other => Err(format!("unknown mode '{other}', expected subsidiary or parent_hq")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Exact,
    Greedy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingChoice {
    #[default]
    Pooled,
    PerFirm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    #[default]
    Production,
    Consumption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub reference_exports: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub learn_rate: f64,
    pub n_cycles: usize,
    pub max_splits: Vec<usize>,
    pub min_parent: Vec<usize>,
    pub top_k: usize,
    pub shuffles: usize,
    pub min_brand_revenue: f64,
    pub min_peer_correlation: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let grid = HyperGrid::default();
        let p = HyperParams::default();
        Self {
            learn_rate: p.learn_rate,
            n_cycles: p.n_cycles,
            max_splits: grid.max_splits,
            min_parent: grid.min_parent,
            top_k: 11,
            shuffles: crate::features::DEFAULT_SHUFFLES,
            min_brand_revenue: MIN_BRAND_REVENUE,
            min_peer_correlation: MIN_PEER_CORRELATION,
        }
    }
}

impl ModelConfig {
    pub fn grid(&self) -> HyperGrid {
        HyperGrid {
            max_splits: self.max_splits.clone(),
            min_parent: self.min_parent.clone(),
        }
    }

    /// Base parameters; the tree shape comes from tuning.
    pub fn base_params(&self) -> HyperParams {
        HyperParams {
            learn_rate: self.learn_rate,
            n_cycles: self.n_cycles,
            ..HyperParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationConfig {
    pub mode: AllocationMode,
    pub solver: SolverChoice,
    pub domestic_floor_km: f64,
    pub ci_level: f64,
    pub grouping: GroupingChoice,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            mode: AllocationMode::Subsidiary,
            solver: SolverChoice::Exact,
            domestic_floor_km: DEFAULT_DOMESTIC_FLOOR_KM,
            ci_level: DEFAULT_LEVEL,
            grouping: GroupingChoice::Pooled,
        }
    }
}

impl AllocationConfig {
    pub fn solver(&self) -> Solver {
        match self.solver {
            SolverChoice::Exact => Solver::Exact,
            SolverChoice::Greedy => Solver::Greedy,
        }
    }

    pub fn grouping(&self) -> ShareGrouping {
        match self.grouping {
            GroupingChoice::Pooled => ShareGrouping::Pooled,
            GroupingChoice::PerFirm => ShareGrouping::PerFirm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub concentration: bool,
    pub random_basket_trials: usize,
    pub centrality: bool,
    pub decoupling: bool,
    pub emissions_basis: BasisChoice,
    pub high_income_only: bool,
    pub upper_bound: bool,
    pub complexity: bool,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            concentration: true,
            random_basket_trials: DEFAULT_TRIALS,
            centrality: true,
            decoupling: true,
            emissions_basis: BasisChoice::Production,
            high_income_only: false,
            upper_bound: true,
            complexity: true,
        }
    }
}

impl AnalyticsConfig {
    pub fn basis(&self) -> EmissionsBasis {
        match self.emissions_basis {
            BasisChoice::Production => EmissionsBasis::Production,
            BasisChoice::Consumption => EmissionsBasis::Consumption,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub years: Option<[Year; 2]>,
    #[serde(default)]
    pub stages: Option<Vec<String>>,
    pub input: InputConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub allocation: AllocationConfig,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Defaults for everything except the input directory and seed.
    pub fn new(input_dir: impl Into<PathBuf>, out: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            out: out.into(),
            years: None,
            stages: None,
            input: InputConfig {
                dir: input_dir.into(),
                reference_exports: None,
            },
            model: ModelConfig::default(),
            allocation: AllocationConfig::default(),
            analytics: AnalyticsConfig::default(),
        }
    }

    /// Parses TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.input.dir = resolve(base_dir, &cfg.input.dir);
        cfg.input.reference_exports = cfg.input.reference_exports.map(|p| resolve(base_dir, &p));
        cfg.out = resolve(base_dir, &cfg.out);
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded. The output
    /// directory does not affect results and is left out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn paths(&self) -> DatasetPaths {
        DatasetPaths::from_dir(&self.input.dir)
    }

    /// The seed, which every stochastic stage requires.
    pub fn seed(&self) -> Result<u64, PipelineError> {
        self.seed
            .ok_or_else(|| PipelineError::Config("seed is required (set `seed` or pass --seed)".into()))
    }

    /// Enabled stages in pipeline order.
    pub fn enabled_stages(&self) -> Result<Vec<Stage>, PipelineError> {
        match &self.stages {
            None => Ok(Stage::ALL.to_vec()),
            Some(names) => {
                let mut chosen = Vec::new();
                for n in names {
                    chosen.push(n.parse::<Stage>().map_err(PipelineError::Config)?);
                }
                Ok(Stage::ALL.iter().copied().filter(|s| chosen.contains(s)).collect())
            }
        }
    }

    /// Checks value ranges and that the input files exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.seed()?;
        self.enabled_stages()?;
        let paths = self.paths();
        for p in [
            &paths.countries,
            &paths.dyads,
            &paths.firms,
            &paths.brands,
            &paths.revenues,
            &paths.consumption,
        ] {
            if !p.is_file() {
                return bad(format!("input file {} does not exist", p.display()));
            }
        }
        if let Some(r) = &self.input.reference_exports {
            if !r.is_file() {
                return bad(format!("reference exports file {} does not exist", r.display()));
            }
        }
        if let Some([a, b]) = self.years {
            if a > b {
                return bad(format!("empty year range {a}..{b}"));
            }
        }
        let m = &self.model;
        if !(m.learn_rate > 0.0 && m.learn_rate <= 1.0) {
            return bad(format!("model.learn_rate must lie in (0, 1], got {}", m.learn_rate));
        }
        if m.n_cycles == 0 || m.top_k == 0 || m.shuffles == 0 {
            return bad("model.n_cycles, model.top_k and model.shuffles must be positive".into());
        }
        if m.max_splits.is_empty() || m.min_parent.is_empty() {
            return bad("hyperparameter grid is empty".into());
        }
        let a = &self.allocation;
        if !(a.domestic_floor_km > 0.0) {
            return bad(format!("allocation.domestic_floor_km must be positive, got {}", a.domestic_floor_km));
        }
        if !(a.ci_level > 0.0 && a.ci_level < 1.0) {
            return bad(format!("allocation.ci_level must lie in (0, 1), got {}", a.ci_level));
        }
        if self.analytics.random_basket_trials == 0 {
            return bad("analytics.random_basket_trials must be positive".into());
        }
        Ok(())
    }
}
