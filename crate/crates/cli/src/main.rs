//! `digitrade` command-line driver.
//!
//! Exit codes: 0 on success, 1 on a domain error (a stage failed or an
//! upstream intermediate is missing), 2 on a usage or configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use digitrade::data_model::{synth_world, write_dataset};
use digitrade::pipeline::{run, run_stage, AllocationMode, PipelineConfig, PipelineError, Stage};

#[derive(Parser, Debug)]
#[command(name = "digitrade", version, about = "Estimate and analyze bilateral trade in digital products")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Run only this stage from persisted intermediates.
    #[arg(long, global = true, value_name = "NAME")]
    stage: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Revenue attribution: subsidiary or parent_hq.
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<AllocationMode>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every enabled stage (the default).
    Run,
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
    /// Write a synthetic input dataset and a matching config.toml.
    Synth {
        #[arg(long, default_value_t = 30)]
        countries: usize,
        #[arg(long, default_value_t = 60)]
        firms: usize,
        #[arg(long, default_value_t = 100)]
        brands: usize,
        #[arg(long, default_value_t = 8)]
        sectors: usize,
        #[arg(long, default_value_t = 0.5)]
        zero_rate: f64,
    },
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Validate => Stage::Validate,
            Command::Features => Stage::Features,
            Command::Train => Stage::Train,
            Command::Cv => Stage::Cv,
            Command::Predict => Stage::Predict,
            Command::Harmonize => Stage::Harmonize,
            Command::Allocate => Stage::Allocate,
            Command::Bounds => Stage::Bounds,
            Command::Analyze => Stage::Analyze,
            Command::Complexity => Stage::Complexity,
            Command::Report => Stage::Report,
            Command::Run | Command::Synth { .. } => return None,
        })
    }
}

enum Failure {
    Usage(String),
    Pipeline(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

fn synth(cli: &Cli, countries: usize, firms: usize, brands: usize, sectors: usize, zero_rate: f64) -> Result<(), Failure> {
    let out = cli.out.clone().ok_or_else(|| Failure::Usage("synth needs --out DIR".into()))?;
    let seed = cli.seed.unwrap_or(1);
    let ds = synth_world(seed, countries, firms, brands, sectors, zero_rate)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    write_dataset(&ds, &out).map_err(|e| Failure::Pipeline(PipelineError::Stage {
        stage: Stage::Validate,
        source: Box::new(e),
    }))?;
    let mut cfg = PipelineConfig::new(".", "out", seed);
    if let Some(m) = cli.mode {
        cfg.allocation.mode = m;
    }
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    println!("wrote synthetic dataset and {}", path.display());
    Ok(())
}

fn pipeline(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config PATH is required".into()))?;
    let mut cfg = PipelineConfig::from_file(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = cli.mode {
        cfg.allocation.mode = m;
    }
    let from_flag = match &cli.stage {
        Some(s) => Some(s.parse::<Stage>().map_err(Failure::Usage)?),
        None => None,
    };
    let from_command = cli.command.as_ref().and_then(Command::stage);
    let stage = match (from_flag, from_command) {
        (Some(a), Some(b)) if a != b => {
            return Err(Failure::Usage(format!("--stage {a} conflicts with subcommand {b}")));
        }
        (a, b) => a.or(b),
    };
    let manifest = match stage {
        Some(s) => run_stage(&cfg, s)?,
        None => run(&cfg)?,
    };
    for n in &manifest.notes {
        eprintln!("note: {n}");
    }
    println!(
        "{} outputs in {} (manifest.json)",
        manifest.outputs.len(),
        cfg.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DIGITRADE_LOG", "warn")).init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot configure {j} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Some(Command::Synth {
            countries,
            firms,
            brands,
            sectors,
            zero_rate,
        }) => synth(&cli, *countries, *firms, *brands, *sectors, *zero_rate),
        _ => pipeline(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let text = s.to_string();
                if !msg.contains(&text) {
                    msg.push_str(&format!(": {text}"));
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
