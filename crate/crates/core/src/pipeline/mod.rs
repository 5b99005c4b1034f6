//! End-to-end orchestration: ingest, features, training, prediction,
//! harmonization, allocation, bounds, analytics, complexity and charts.
//!
//! Every stage reads its inputs from the dataset and from CSV intermediates
//! in the output directory, so any stage can be re-run on its own. Stages
//! that cannot run on a small dataset (too few countries for complexity,
//! too few products for tuning) degrade to an empty table and a note in the
//! manifest rather than failing.

mod config;
mod report;
mod stages;
mod tables;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    AllocationConfig, AllocationMode, AnalyticsConfig, BasisChoice, GroupingChoice, InputConfig, ModelConfig,
    PipelineConfig, SolverChoice,
};
pub use tables::{read_allocations, read_consumption, read_flows, read_training_table, write_flows};

/// File name of the run manifest inside the output directory.
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Validate,
    Features,
    Train,
    Cv,
    Predict,
    Harmonize,
    Allocate,
    Bounds,
    Analyze,
    Complexity,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Validate,
        Stage::Features,
        Stage::Train,
        Stage::Cv,
        Stage::Predict,
        Stage::Harmonize,
        Stage::Allocate,
        Stage::Bounds,
        Stage::Analyze,
        Stage::Complexity,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Cv => "cv",
            Stage::Predict => "predict",
            Stage::Harmonize => "harmonize",
            Stage::Allocate => "allocate",
            Stage::Bounds => "bounds",
            Stage::Analyze => "analyze",
            Stage::Complexity => "complexity",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{file} not found: run {stage} first")]
    MissingIntermediate { file: String, stage: Stage },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: BoxError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn stage(stage: Stage, e: impl Into<BoxError>) -> Self {
        PipelineError::Stage {
            stage,
            source: e.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for configuration (usage) errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub seed: u64,
    pub mode: String,
    pub stages: Vec<StageTiming>,
    /// Every file in the output directory except the manifest, by name.
    pub outputs: Vec<OutputDigest>,
    /// Stages or analytics that were skipped or degraded, with the reason.
    pub notes: Vec<String>,
}

impl RunManifest {
    /// Output digests keyed by file name.
    pub fn digests(&self) -> BTreeMap<&str, &str> {
        self.outputs.iter().map(|o| (o.file.as_str(), o.sha256.as_str())).collect()
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::io(path, std::io::Error::other(e)))
    }
}

/// Shared state of one invocation.
pub(crate) struct RunContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: PathBuf,
    pub notes: Vec<String>,
}

impl RunContext<'_> {
    pub fn note(&mut self, stage: Stage, message: impl Into<String>) {
        let m = format!("{stage}: {}", message.into());
        log::info!("{m}");
        self.notes.push(m);
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    /// Path of an intermediate that `stage` must have produced.
    pub fn require(&self, file: &str, stage: Stage) -> Result<PathBuf, PipelineError> {
        let p = self.path(file);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingIntermediate {
                file: file.to_string(),
                stage,
            })
        }
    }
}

fn sha256_file(path: &Path) -> Result<(String, u64), PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Digests of every regular file in `out` except the manifest.
pub fn output_digests(out: &Path) -> Result<Vec<OutputDigest>, PipelineError> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(out).map_err(|e| PipelineError::io(out, e))? {
        let entry = entry.map_err(|e| PipelineError::io(out, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_file() && name != MANIFEST {
            names.push(name);
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|file| {
            let (sha256, bytes) = sha256_file(&out.join(&file))?;
            Ok(OutputDigest { file, sha256, bytes })
        })
        .collect()
}

fn execute(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| PipelineError::io(&cfg.out, e))?;
    let dataset_digest = {
        let raw = crate::data_model::load_raw(&cfg.paths()).map_err(|e| PipelineError::stage(Stage::Validate, e))?;
        crate::data_model::dataset_digest(&raw)
    };
    let mut ctx = RunContext {
        cfg,
        out: cfg.out.clone(),
        notes: Vec::new(),
    };
    let mut timings = Vec::new();
    for &stage in stages {
        log::info!("stage {stage}");
        let t0 = Instant::now();
        stages::run(stage, &mut ctx)?;
        timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: cfg.digest(),
        dataset_digest,
        seed,
        mode: cfg.allocation.mode.as_str().to_string(),
        stages: timings,
        outputs: output_digests(&cfg.out)?,
        notes: ctx.notes,
    };
    let path = cfg.out.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| PipelineError::io(&path, e))?;
    Ok(manifest)
}

/// Runs every enabled stage in order and writes the manifest. A failing
/// stage aborts the run; outputs of earlier stages stay on disk.
pub fn run(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let stages = cfg.enabled_stages()?;
    execute(cfg, &stages)
}

/// Runs one stage from persisted intermediates and rewrites the manifest.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<RunManifest, PipelineError> {
    execute(cfg, &[stage])
}
