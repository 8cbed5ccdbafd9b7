//! Service settings. A TOML file of `key = value` lines is read first, then
//! environment variables, then command-line flags; later sources win.

use std::path::{Path, PathBuf};
use std::time::Duration;

use bimqa_core::llm::{LlmConfig, DEFAULT_SEGMENT_ROWS, DEFAULT_TABLE_BUDGET};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub max_upload_bytes: usize,
    /// Extracted CSVs are kept here under the sha256 of the uploaded bytes.
    pub cache_dir: Option<PathBuf>,
    pub llm_base_url: Option<String>,
    pub llm_model: Option<String>,
    pub llm_api_key_env: String,
    pub llm_timeout_secs: u64,
    pub llm_max_retries: u32,
    pub llm_parallelism: usize,
    pub budget: usize,
    pub segment_rows: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let llm = LlmConfig::default();
        ServiceConfig {
            host: "127.0.0.1".to_string(),
            port: 8080,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            cache_dir: None,
            llm_base_url: None,
            llm_model: None,
            llm_api_key_env: llm.api_key_env,
            llm_timeout_secs: llm.timeout.as_secs(),
            llm_max_retries: llm.max_retries,
            llm_parallelism: llm.parallelism,
            budget: DEFAULT_TABLE_BUDGET,
            segment_rows: DEFAULT_SEGMENT_ROWS,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("config file {0}: {1}")]
    Parse(String, toml::de::Error),
    #[error("{0}={1:?} is not a valid value")]
    Env(&'static str, String),
}

/// Settings given by one source; unset fields leave earlier values alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub max_upload_bytes: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub llm_base_url: Option<String>,
    pub llm_model: Option<String>,
    pub budget: Option<usize>,
    pub segment_rows: Option<usize>,
}

fn parsed<T: std::str::FromStr>(
    lookup: &dyn Fn(&str) -> Option<String>,
    key: &'static str,
) -> Result<Option<T>, ConfigError> {
    match lookup(key) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::Env(key, v)),
    }
}

impl Overrides {
    /// `BIMQA_HOST`, `BIMQA_PORT`, `BIMQA_MAX_UPLOAD_BYTES`, `BIMQA_CACHE_DIR`,
    /// `BIMQA_BUDGET`, `BIMQA_SEGMENT_ROWS`, `LLM_BASE_URL`, `LLM_MODEL`.
    pub fn from_env(lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        Ok(Overrides {
            host: lookup("BIMQA_HOST"),
            port: parsed(lookup, "BIMQA_PORT")?,
            max_upload_bytes: parsed(lookup, "BIMQA_MAX_UPLOAD_BYTES")?,
            cache_dir: lookup("BIMQA_CACHE_DIR").map(PathBuf::from),
            llm_base_url: lookup("LLM_BASE_URL"),
            llm_model: lookup("LLM_MODEL"),
            budget: parsed(lookup, "BIMQA_BUDGET")?,
            segment_rows: parsed(lookup, "BIMQA_SEGMENT_ROWS")?,
        })
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(origin.to_string(), e))
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &o.$f {
                    self.$f = v.clone();
                }
            )*};
        }
        set!(host, port, max_upload_bytes, budget, segment_rows);
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if o.$f.is_some() {
                    self.$f = o.$f.clone();
                }
            )*};
        }
        set_opt!(cache_dir, llm_base_url, llm_model);
    }

    pub fn resolve(
        file: Option<&Path>,
        env: &Overrides,
        flags: &Overrides,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(path) => {
                let shown = path.display().to_string();
                let text =
                    std::fs::read_to_string(path).map_err(|e| ConfigError::Io(shown.clone(), e))?;
                Self::from_toml(&text, &shown)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply(env);
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn llm_config(&self) -> LlmConfig {
        let mut llm = LlmConfig::default();
        if let Some(url) = &self.llm_base_url {
            llm.base_url = url.clone();
        }
        if let Some(model) = &self.llm_model {
            llm.model = model.clone();
        }
        llm.api_key_env = self.llm_api_key_env.clone();
        llm.timeout = Duration::from_secs(self.llm_timeout_secs);
        llm.max_retries = self.llm_max_retries;
        llm.parallelism = self.llm_parallelism.max(1);
        llm
    }
}
