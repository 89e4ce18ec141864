//! Service configuration: a TOML file with `INFOTRIAGE_*` environment
//! overrides for the scalar settings.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store_dir = "store"
//! parallelism = 0
//! search_deadline_secs = 600
//!
//! [backends.lexicon]
//! type = "lexicon"
//!
//! [backends.neural]
//! type = "remote"
//! endpoint = "http://127.0.0.1:9000"
//! timeout_secs = 20
//! capabilities = ["sentiment", "stance"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use infotriage_core::classify::{ClassifierBackend, Lexicon, LexiconBackend, RemoteBackend, RemoteConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "INFOTRIAGE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("backend {name:?}: {reason}")]
    Backend { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BackendSpec {
    Lexicon {
        /// TSV of `word<TAB>polarity`; the bundled lexicon when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lexicon: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_rel: Option<f64>,
    },
    Remote(RemoteConfig),
}

impl BackendSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendSpec::Lexicon { .. } => "lexicon",
            BackendSpec::Remote(_) => "remote",
        }
    }

    pub fn build(&self, name: &str) -> Result<Arc<dyn ClassifierBackend>, ConfigError> {
        match self {
            BackendSpec::Lexicon { lexicon, window, theta_rel } => {
                let lex = match lexicon {
                    Some(path) => Lexicon::load(path).map_err(|reason| ConfigError::Backend {
                        name: name.to_string(),
                        reason,
                    })?,
                    None => Lexicon::bundled(),
                };
                let mut backend = LexiconBackend::new(name, lex);
                if let Some(w) = window {
                    backend = backend.with_window(*w);
                }
                if let Some(t) = theta_rel {
                    backend = backend.with_theta_rel(*t);
                }
                Ok(Arc::new(backend))
            }
            BackendSpec::Remote(config) => {
                if config.endpoint.is_empty() {
                    return Err(ConfigError::Backend {
                        name: name.to_string(),
                        reason: "remote backend needs an endpoint".into(),
                    });
                }
                Ok(Arc::new(RemoteBackend::new(name, config)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub store_dir: PathBuf,
    /// Search worker threads; 0 means one per processor.
    pub parallelism: usize,
    pub max_upload_bytes: usize,
    /// Searches still running after this many seconds are marked failed.
    pub search_deadline_secs: Option<f64>,
    pub max_concurrent_searches: usize,
    pub backends: BTreeMap<String, BackendSpec>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            store_dir: PathBuf::from("infotriage-store"),
            parallelism: 0,
            max_upload_bytes: 512 * 1024 * 1024,
            search_deadline_secs: None,
            max_concurrent_searches: 2,
            backends: BTreeMap::new(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.store_dir.is_relative() {
            self.store_dir = base.join(&self.store_dir);
        }
        for spec in self.backends.values_mut() {
            if let BackendSpec::Lexicon { lexicon: Some(p), .. } = spec {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |what: &str| ConfigError::Invalid(format!("{key}={value:?} is not {what}"));
            match name {
                "LISTEN" => self.listen = value.clone(),
                "STORE_DIR" => self.store_dir = PathBuf::from(&value),
                "PARALLELISM" => self.parallelism = value.parse().map_err(|_| bad("a thread count"))?,
                "MAX_UPLOAD_BYTES" => self.max_upload_bytes = value.parse().map_err(|_| bad("a byte count"))?,
                "SEARCH_DEADLINE_SECS" => {
                    self.search_deadline_secs = Some(value.parse().map_err(|_| bad("a number of seconds"))?)
                }
                "MAX_CONCURRENT_SEARCHES" => {
                    self.max_concurrent_searches = value.parse().map_err(|_| bad("a count"))?
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Configured backends; a bundled lexicon backend named "lexicon" when
    /// none are configured.
    pub fn backend_specs(&self) -> BTreeMap<String, BackendSpec> {
        if self.backends.is_empty() {
            let default = BackendSpec::Lexicon {
                lexicon: None,
                window: None,
                theta_rel: None,
            };
            BTreeMap::from([("lexicon".to_string(), default)])
        } else {
            self.backends.clone()
        }
    }
}
