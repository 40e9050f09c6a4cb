//! Experiment runner for `hymlab-core`.
//!
//! `hymlab run <config> [--out DIR] [--seed N] [--grid RxA]` executes one
//! scenario and writes a JSON report plus optional CSV series. Exit codes:
//! 0 when every assertion passes, 1 on assertion failure or a numerical
//! breakdown, 2 on configuration errors.

pub mod config;
pub mod report;
pub mod scenarios;

use std::path::{Path, PathBuf};

use hymlab_core::Error as CoreError;

use config::{parse_grid, ConfigError, ExperimentConfig, RawConfig};
use report::Report;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid --grid: {0}")]
    Grid(String),
    #[error("scenario rejected its inputs: {0}")]
    Input(CoreError),
    #[error("scenario failed: {0}")]
    Numeric(CoreError),
    #[error(transparent)]
    Write(#[from] report::WriteError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Read { .. } | Self::Grid(_) | Self::Input(_) => EXIT_CONFIG,
            Self::Numeric(_) | Self::Write(_) => EXIT_FAIL,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::GridTooSmall { .. }
            | CoreError::InvalidBundle(_)
            | CoreError::InvalidFiltration(_)
            | CoreError::InvalidArgument(_)
            | CoreError::Precondition(_) => Self::Input(e),
            _ => Self::Numeric(e),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<String>,
}

pub fn load(text: &str, overrides: &Overrides) -> Result<(RawConfig, ExperimentConfig), RunError> {
    let mut raw = RawConfig::parse(text)?;
    if let Some(seed) = overrides.seed {
        raw.set("seed", seed.to_string());
    }
    if let Some(grid) = &overrides.grid {
        let (r, a) = parse_grid(grid).map_err(RunError::Grid)?;
        raw.set("geometry.n_radial", r.to_string());
        raw.set("geometry.n_angular", a.to_string());
    }
    let cfg = ExperimentConfig::from_raw(&raw)?;
    Ok((raw, cfg))
}

pub struct RunOutput {
    pub report: Report,
    pub written: Vec<PathBuf>,
}

/// Runs a config file and writes its outputs into `out`.
pub fn run_file(path: &Path, out: &Path, overrides: &Overrides) -> Result<RunOutput, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let (raw, cfg) = load(&text, overrides)?;
    let output = scenarios::run(&cfg)?;
    let scenario = serde_json::to_value(cfg.scenario).expect("scenario serializes");
    let report = Report::new(
        scenario.as_str().unwrap_or_default(),
        raw.as_map(),
        output.assertions,
        output.results,
    );
    let written = report::emit(out, &cfg.report_name, &report, &output.series)?;
    Ok(RunOutput { report, written })
}
