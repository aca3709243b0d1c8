use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use latentcache::engine::EngineConfig;
use latentcache::simgen::LatentSpec;

use crate::error::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "LATENTCACHE_CONFIG";

/// Run configuration. Command-line flags override file values.
///
/// ```toml
/// trace = "trace.jsonl"
/// out = "results"
/// seed = 0
///
/// [engine]
/// capacity_bytes = 1000000000
/// policy = "lrbu"
///
/// [latents]
/// frames = 16
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Seed of the synthetic latents.
    pub seed: Option<u64>,
    pub engine: EngineConfig,
    pub latents: LatentSpec,
}

impl Config {
    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(e.to_string()).context(path.display()))?;
        let mut cfg: Config = toml::from_str(&text)
            .map_err(|e| CliError::data(e.to_string()).context(path.display()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.trace, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `explicit`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, CliError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => {
                    Self::load(Path::new(&p)).map_err(|e| e.context(CONFIG_ENV))
                }
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.engine.validate()?;
        self.latents
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        if let Some(t) = &self.trace {
            if !t.is_file() {
                return Err(CliError::usage(format!(
                    "trace file {} does not exist",
                    t.display()
                )));
            }
        }
        Ok(())
    }
}
