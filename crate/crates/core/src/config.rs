//! Run configuration: a TOML file, overridden field by field by CLI flags.
//!
//! ```toml
//! alpha = 0.6          # weight of the semantic term
//! tau = 0.8            # consensus threshold
//! epsilon = 1e-4       # failure tolerance for planning
//! seed = 0
//! trials = 100000      # Monte Carlo trials
//! parallelism = 16     # global cap on in-flight generation requests
//! min_pool = 8         # optional; defaults to half the requested pool
//! catalog = "catalog.jsonl"
//!
//! [embedding]
//! endpoint = "deterministic-test"   # or an HTTP URL
//! model = "fnv-hash"
//! credential_env = "EMBED_API_KEY"  # variable name only, never the key
//!
//! [[providers]]
//! id = "model-a"
//! endpoint = "https://api.example.com/v1/chat/completions"
//! model = "model-a-large"
//! api = "openai"                    # openai | anthropic | stub
//! credential_env = "MODEL_A_KEY"
//! temperatures = [0.0, 0.25, 0.5, 0.75]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{DEFAULT_ALPHA, DEFAULT_TAU, PRODUCTION_ALPHA};
use crate::embedding::EmbeddingProviderConfig;
use crate::orchestrator::ProviderSpec;

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_PARALLELISM: usize = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Contents of a config file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub parallelism: Option<usize>,
    pub min_pool: Option<usize>,
    pub catalog: Option<PathBuf>,
    /// `"default"` (α = 0.6) or `"production"` (α = 0.65); an explicit
    /// `alpha` wins over the preset.
    pub preset: Option<String>,
    pub embedding: Option<EmbeddingProviderConfig>,
    #[serde(default)]
    pub providers: Vec<ProviderSpec>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Values supplied on the command line; `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub parallelism: Option<usize>,
    pub min_pool: Option<usize>,
    pub catalog: Option<PathBuf>,
}

/// Fully resolved settings: flag, then config file, then built-in default.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub trials: u64,
    pub parallelism: usize,
    pub min_pool: Option<usize>,
    pub catalog: Option<PathBuf>,
    pub embedding: EmbeddingProviderConfig,
    pub providers: Vec<ProviderSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(ConfigFile::default(), &Overrides::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: &Overrides) -> Result<Self, ConfigError> {
        let preset_alpha = match file.preset.as_deref() {
            None | Some("default") => DEFAULT_ALPHA,
            Some("production") => PRODUCTION_ALPHA,
            Some(other) => return Err(ConfigError::Invalid(format!("unknown preset {other:?}"))),
        };
        let cfg = Self {
            alpha: flags.alpha.or(file.alpha).unwrap_or(preset_alpha),
            tau: flags.tau.or(file.tau).unwrap_or(DEFAULT_TAU),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            trials: flags.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            parallelism: flags.parallelism.or(file.parallelism).unwrap_or(DEFAULT_PARALLELISM),
            min_pool: flags.min_pool.or(file.min_pool),
            catalog: flags.catalog.clone().or(file.catalog),
            embedding: file.embedding.unwrap_or_default(),
            providers: file.providers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, ConfigError> {
        let file = match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Self::resolve(file, flags)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return invalid(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return invalid(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.parallelism == 0 {
            return invalid("parallelism must be >= 1".into());
        }
        if self.min_pool == Some(0) {
            return invalid("min_pool must be >= 1".into());
        }
        self.embedding
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut ids = std::collections::HashSet::new();
        for p in &self.providers {
            p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !ids.insert(&p.id) {
                return invalid(format!("duplicate provider id {}", p.id));
            }
            if let Some(var) = &p.credential_env {
                if !is_env_var_name(var) {
                    return invalid(format!("{}: credential_env must name an environment variable", p.id));
                }
            }
        }
        if let Some(var) = &self.embedding.credential_env {
            if !is_env_var_name(var) {
                return invalid("embedding.credential_env must name an environment variable".into());
            }
        }
        Ok(())
    }
}

/// Rejects values that look like inlined secrets rather than variable names.
fn is_env_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.alpha, 0.6);
        assert_eq!(c.tau, 0.8);
        assert_eq!(c.epsilon, 1e-4);
        assert!(c.providers.is_empty());
    }

    #[test]
    fn api_flavour_names() {
        use crate::orchestrator::ApiFlavor;
        for (name, want) in [("openai", ApiFlavor::OpenAi), ("open_ai", ApiFlavor::OpenAi), ("anthropic", ApiFlavor::Anthropic)] {
            let text = format!("[[providers]]\nid = \"x\"\nendpoint = \"http://h\"\nmodel = \"m\"\napi = \"{name}\"\n");
            assert_eq!(ConfigFile::parse(&text).unwrap().providers[0].api, want);
        }
    }

    #[test]
    fn precedence_per_field() {
        let file = ConfigFile::parse(
            r#"
            alpha = 0.5
            tau = 0.7
            epsilon = 0.01
            seed = 5
            trials = 2000
            parallelism = 3
            min_pool = 2
            catalog = "from-file.jsonl"
            "#,
        )
        .unwrap();
        let none = RunConfig::resolve(file.clone(), &Overrides::default()).unwrap();
        assert_eq!(
            (none.alpha, none.tau, none.epsilon, none.seed, none.trials, none.parallelism, none.min_pool),
            (0.5, 0.7, 0.01, 5, 2000, 3, Some(2))
        );
        assert_eq!(none.catalog, Some(PathBuf::from("from-file.jsonl")));

        let flags = Overrides {
            alpha: Some(0.9),
            tau: Some(0.1),
            epsilon: Some(0.2),
            seed: Some(6),
            trials: Some(3000),
            parallelism: Some(4),
            min_pool: Some(3),
            catalog: Some("flag.jsonl".into()),
        };
        let all = RunConfig::resolve(file, &flags).unwrap();
        assert_eq!(
            (all.alpha, all.tau, all.epsilon, all.seed, all.trials, all.parallelism, all.min_pool),
            (0.9, 0.1, 0.2, 6, 3000, 4, Some(3))
        );
        assert_eq!(all.catalog, Some(PathBuf::from("flag.jsonl")));
    }

    #[test]
    fn production_preset() {
        let file = ConfigFile::parse(r#"preset = "production""#).unwrap();
        assert_eq!(RunConfig::resolve(file, &Overrides::default()).unwrap().alpha, 0.65);
        let file = ConfigFile::parse("preset = \"production\"\nalpha = 0.3").unwrap();
        assert_eq!(RunConfig::resolve(file, &Overrides::default()).unwrap().alpha, 0.3);
        let file = ConfigFile::parse(r#"preset = "fast""#).unwrap();
        assert!(RunConfig::resolve(file, &Overrides::default()).is_err());
    }

    #[test]
    fn providers_and_validation() {
        let file = ConfigFile::parse(
            r#"
            [embedding]
            endpoint = "deterministic-test"
            dim = 64

            [[providers]]
            id = "a"
            endpoint = "stub:deterministic"
            model = "m"
            api = "stub"

            [[providers]]
            id = "b"
            endpoint = "https://example.invalid/v1/messages"
            model = "m2"
            api = "anthropic"
            credential_env = "B_KEY"
            temperatures = [0.0, 0.5]
            "#,
        )
        .unwrap();
        let cfg = RunConfig::resolve(file, &Overrides::default()).unwrap();
        assert_eq!(cfg.providers.len(), 2);
        assert_eq!(cfg.embedding.dim, 64);

        let inlined = ConfigFile::parse(
            r#"
            [[providers]]
            id = "a"
            endpoint = "https://x"
            model = "m"
            credential_env = "sk-live-abc123/xyz"
            "#,
        )
        .unwrap();
        assert!(RunConfig::resolve(inlined, &Overrides::default()).is_err());

        assert!(ConfigFile::parse("alpha = 0.5\nunknown = 1").is_err());
        let bad = Overrides {
            alpha: Some(1.5),
            ..Default::default()
        };
        assert!(RunConfig::resolve(ConfigFile::default(), &bad).is_err());
    }
}
