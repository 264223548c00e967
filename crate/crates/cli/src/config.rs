//! Option resolution: command-line flags, then `TAMP_*` environment
//! variables, then the config file, then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tamp_core::agent::PlacementMode;
use tamp_core::llm_backend::{Dialect, HttpConfig};
use tamp_core::placer::AxisConvention;

/// Environment variable holding the API key for the http backend.
pub const API_KEY_ENV: &str = "TAMP_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Live chat endpoint.
    Http,
    /// Recorded fixture, fully offline.
    Replay,
    /// Live endpoint, recording a fixture.
    Capture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DialectArg {
    Openai,
    Ollama,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Self {
        match d {
            DialectArg::Openai => Dialect::OpenAi,
            DialectArg::Ollama => Dialect::Ollama,
        }
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// TOML file with defaults for any option below.
    #[arg(long, env = "TAMP_CONFIG", global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "TAMP_BACKEND", global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Chat endpoint base URL.
    #[arg(long, env = "TAMP_ENDPOINT", global = true, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, env = "TAMP_MODEL", global = true)]
    pub model: Option<String>,
    #[arg(long, env = "TAMP_DIALECT", global = true, value_enum)]
    pub dialect: Option<DialectArg>,
    #[arg(long, env = "TAMP_TEMPERATURE", global = true)]
    pub temperature: Option<f64>,
    #[arg(long, env = "TAMP_MAX_STEPS", global = true)]
    pub max_steps: Option<usize>,
    /// geometric, llm or llm-fallback.
    #[arg(long, env = "TAMP_PLACEMENT", global = true)]
    pub placement: Option<PlacementMode>,
    /// Axis convention TOML file.
    #[arg(long, env = "TAMP_CONVENTION", global = true, value_name = "FILE")]
    pub convention: Option<PathBuf>,
    /// Agent fixture (JSON Lines) to replay or to capture into.
    #[arg(long, env = "TAMP_FIXTURE", global = true, value_name = "FILE")]
    pub fixture: Option<PathBuf>,
    /// Placer fixture to replay or to capture into.
    #[arg(long, env = "TAMP_PLACER_FIXTURE", global = true, value_name = "FILE")]
    pub placer_fixture: Option<PathBuf>,
    #[arg(long, env = "TAMP_SEED", global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "TAMP_OUT", global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Episodes to run concurrently in `eval`.
    #[arg(long, env = "TAMP_PARALLEL", global = true)]
    pub parallel: Option<usize>,
    /// Per-request timeout for the http backend, seconds.
    #[arg(long, env = "TAMP_TIMEOUT", global = true)]
    pub timeout: Option<u64>,
    /// Extra attempts after a transport failure.
    #[arg(long, env = "TAMP_RETRIES", global = true)]
    pub retries: Option<u32>,
}

/// Config-file form of [`GlobalOpts`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub dialect: Option<DialectArg>,
    pub temperature: Option<f64>,
    pub max_steps: Option<usize>,
    pub placement: Option<PlacementMode>,
    pub convention: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub placer_fixture: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub timeout: Option<u64>,
    pub retries: Option<u32>,
}

impl FileConfig {
    /// Parses a config file; relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.convention,
            &mut cfg.fixture,
            &mut cfg.placer_fixture,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub dialect: DialectArg,
    pub temperature: f64,
    pub max_steps: usize,
    pub placement: PlacementMode,
    pub convention: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub placer_fixture: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub timeout: u64,
    pub retries: u32,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl RunConfig {
    /// Merges flags/env (already combined by the parser) over the config file.
    pub fn resolve(opts: &GlobalOpts) -> Result<Self> {
        let file = match &opts.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::merge(opts, file, std::env::var(API_KEY_ENV).ok())
    }

    pub fn merge(opts: &GlobalOpts, file: FileConfig, api_key: Option<String>) -> Result<Self> {
        let o = opts.clone();
        let cfg = Self {
            backend: o.backend.or(file.backend).unwrap_or(BackendKind::Replay),
            endpoint: o.endpoint.or(file.endpoint),
            model: o.model.or(file.model),
            dialect: o.dialect.or(file.dialect).unwrap_or(DialectArg::Openai),
            temperature: o.temperature.or(file.temperature).unwrap_or(0.0),
            max_steps: o.max_steps.or(file.max_steps).unwrap_or(15),
            placement: o.placement.or(file.placement).unwrap_or_default(),
            convention: o.convention.or(file.convention),
            fixture: o.fixture.or(file.fixture),
            placer_fixture: o.placer_fixture.or(file.placer_fixture),
            seed: o.seed.or(file.seed).unwrap_or(0),
            out: o.out.or(file.out).unwrap_or_else(|| PathBuf::from("tamp-out")),
            parallel: o.parallel.or(file.parallel).unwrap_or(1),
            timeout: o.timeout.or(file.timeout).unwrap_or(120),
            retries: o.retries.or(file.retries).unwrap_or(2),
            api_key: api_key.filter(|k| !k.is_empty()),
        };
        if cfg.temperature.is_nan() || cfg.temperature < 0.0 {
            bail!("--temperature must be >= 0 (got {})", cfg.temperature);
        }
        if cfg.max_steps == 0 {
            bail!("--max-steps must be at least 1");
        }
        if cfg.parallel == 0 {
            bail!("--parallel must be at least 1");
        }
        Ok(cfg)
    }

    /// Endpoint settings for the http and capture backends.
    pub fn http(&self) -> Result<HttpConfig> {
        let Some(endpoint) = &self.endpoint else {
            bail!("the {:?} backend needs --endpoint (or TAMP_ENDPOINT)", self.backend);
        };
        let Some(model) = &self.model else {
            bail!("the {:?} backend needs --model (or TAMP_MODEL)", self.backend);
        };
        let mut http = HttpConfig::new(endpoint.clone(), model.clone());
        http.api_key = self.api_key.clone();
        http.timeout = Duration::from_secs(self.timeout);
        http.retries = self.retries;
        http.dialect = self.dialect.into();
        Ok(http)
    }

    pub fn load_convention(&self) -> Result<AxisConvention> {
        match &self.convention {
            None => Ok(AxisConvention::default()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read convention file {}", path.display()))?;
                AxisConvention::from_toml(&text).with_context(|| format!("invalid convention file {}", path.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
