//! TOML run configurations, one per subcommand. Relative paths inside a
//! config resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use telepar_core::causal::{DesignOptions, EventStudySpec, DEFAULT_LEVELS};
use telepar_core::consistency::ConsistencyStudy;
use telepar_core::equilibrium::{BroadbandResponse, MarketPrimitives, PolicyRegime};
use telepar_core::ingest::{Standardization, Transform};
use telepar_core::montecarlo::RecoveryStudy;
use telepar_core::ppml::ModelSpec;
use telepar_core::synth::{PanelConfig, TrueParameters};
use telepar_core::{Error, Result};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn require_file(config: &Path, p: &Path) -> Result<PathBuf> {
    let full = resolve(config, p);
    if full.is_file() {
        Ok(full)
    } else {
        Err(Error::Config(format!("input file {} does not exist", full.display())))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub primitives: MarketPrimitives,
    #[serde(default)]
    pub response: BroadbandResponse,
    pub regimes: Vec<PolicyRegime>,
    pub broadband: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default)]
    pub panel: PanelConfig,
    #[serde(default)]
    pub params: TrueParameters,
    #[serde(default = "default_county_mean")]
    pub county_mean: f64,
    #[serde(default = "default_county_sd")]
    pub county_sd: f64,
    #[serde(default = "default_year_sd")]
    pub year_sd: f64,
}

fn default_county_mean() -> f64 {
    3.0
}

fn default_county_sd() -> f64 {
    1.0
}

fn default_year_sd() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub panel: PathBuf,
    /// Defaults to every type with at least one flagged row.
    #[serde(default)]
    pub types: Option<Vec<String>>,
    #[serde(default)]
    pub design: DesignOptions,
    #[serde(default)]
    pub model: ModelSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub panel: PathBuf,
    #[serde(default)]
    pub types: Option<Vec<String>>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub acrt_at: f64,
    #[serde(default)]
    pub design: DesignOptions,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "yes")]
    pub reset: bool,
    /// Years to move adoption back; 0 skips the placebo.
    #[serde(default = "default_shift")]
    pub placebo_shift: u32,
    #[serde(default = "yes")]
    pub placebo_controls: bool,
    /// Omit to skip the event study.
    #[serde(default)]
    pub event_study: Option<EventStudySpec>,
}

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

fn default_shift() -> u32 {
    2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub broadband: PathBuf,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default)]
    pub standardization: Standardization,
    /// With outcomes given, the panel is assembled as well.
    #[serde(default)]
    pub outcomes: Option<PathBuf>,
    #[serde(default)]
    pub controls: Option<PathBuf>,
    #[serde(default)]
    pub laws: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonteCarloConfig {
    Recovery {
        #[serde(default)]
        study: RecoveryStudy,
    },
    Consistency {
        study: ConsistencyStudy,
    },
}
