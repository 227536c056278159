use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxg_core::cost::{CostParams, Money};
use cxg_core::gateway::HttpConfig;
use cxg_core::store::StoreConfig;
use serde::{Deserialize, Serialize};

/// Settings shared by the subcommands. Flags given on the command line win.
/// API keys never live here: `backend.api_key_env` names the variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Model for `probe` and for overriding preset models in `classify`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Pattern file used by `match` when `--pattern` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PathBuf>,
    /// Event log of the annotation store.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    /// Built annotation UI.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
    pub port: u16,
    pub tp_required: u64,
    pub backend: HttpConfig,
    pub prices: CostParams,
    pub sampler: StoreConfig,
}

impl Default for Config {
    fn default() -> Self {
        let token = Money::parse("0.000001").unwrap();
        Config {
            model: None,
            pattern: None,
            store: None,
            static_dir: None,
            port: 8080,
            tp_required: 1000,
            backend: HttpConfig::default(),
            prices: CostParams {
                c_hr: Money::parse("0.2").unwrap(),
                c_api_in: token,
                c_api_out: token,
            },
            sampler: StoreConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.prices.validate()?;
        if self.sampler.cap_per_class == 0 {
            bail!("sampler.cap_per_class must be at least 1");
        }
        Ok(())
    }

    /// Parse a file and resolve its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.pattern, &mut config.store, &mut config.static_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = config.pattern.as_ref().filter(|p| !p.is_file()) {
            bail!("pattern file {} does not exist", p.display());
        }
        if let Some(p) = config.static_dir.as_ref().filter(|p| !p.is_dir()) {
            bail!("static directory {} does not exist", p.display());
        }
        if let Some(p) = &config.store {
            let parent = p
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !parent.is_dir() {
                bail!("store directory {} does not exist", parent.display());
            }
        }
        Ok(config)
    }
}
