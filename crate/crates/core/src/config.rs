//! Run configuration, loaded from TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::http::{http_backends, HttpConfig};
use crate::backends::mock::{mock_backends_with, Fixtures};
use crate::backends::{BackendResult, Backends, RetryPolicy};
use crate::draft::DraftConfig;
use crate::edit::{EditConfig, ExampleBank};
use crate::orchestrator::RunConfig;
use crate::plan::PlanConfig;
use crate::rewrite::{FilterConfig, RerankConfig};
use crate::templates::Templates;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Deterministic offline backends.
    #[default]
    Mock,
    /// Remote completion API plus the model server.
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub profile: Profile,
    pub retry: RetryPolicy,
    pub http: HttpConfig,
    /// Extra mock fixture files, merged over the built-in ones.
    pub fixtures_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    pub plan: PlanConfig,
    pub draft: DraftConfig,
    pub filters: FilterConfig,
    pub rerank: RerankConfig,
    pub edit: EditConfig,
    pub backend: BackendConfig,
    /// Directory of `<name>.txt` files overriding prompt templates.
    pub templates_dir: Option<PathBuf>,
    /// Replacement for the built-in attribute-extraction examples.
    pub example_bank: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(src: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(src)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&src).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run.validate().map_err(ConfigError::Invalid)?;
        let e = &self.edit;
        for (name, v) in [
            ("edit.entail_threshold", e.entail_threshold),
            ("edit.contradict_threshold", e.contradict_threshold),
            ("edit.qa_threshold", e.qa_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} must be in [0, 1]")));
            }
        }
        if self.draft.num_candidates == 0 {
            return Err(ConfigError::Invalid("draft.num_candidates must be >= 1".into()));
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<Templates, ConfigError> {
        let t = Templates::default();
        match &self.templates_dir {
            Some(dir) => t.with_overrides(dir).map_err(|source| ConfigError::Io {
                path: dir.clone(),
                source,
            }),
            None => Ok(t),
        }
    }

    pub fn example_bank(&self) -> Result<ExampleBank, ConfigError> {
        match &self.example_bank {
            Some(p) => ExampleBank::from_file(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            }),
            None => Ok(ExampleBank::builtin()),
        }
    }

    pub fn fixtures(&self) -> Result<Fixtures, ConfigError> {
        let mut f = Fixtures::builtin();
        if let Some(dir) = &self.backend.fixtures_dir {
            f.extend_from_dir(dir).map_err(|source| ConfigError::Io {
                path: dir.clone(),
                source,
            })?;
        }
        Ok(f)
    }

    /// Backends for the configured profile. The mock profile is seeded
    /// from `run.seed`.
    pub fn build_backends(&self) -> Result<Backends, Box<dyn std::error::Error + Send + Sync>> {
        let b: BackendResult<Backends> = match self.backend.profile {
            Profile::Mock => Ok(Backends {
                retry: self.backend.retry,
                ..mock_backends_with(self.run.seed, self.fixtures()?)
            }),
            Profile::Http => http_backends(&self.backend.http, self.backend.retry),
        };
        Ok(b?)
    }
}
