//! TOML configuration for iteration runs and simulation scenarios.
//!
//! Every key is optional; missing keys fall back to the pipeline defaults
//! (batch_size 40, max_attempts 3, threshold 0.1, metric MER). The endpoint
//! credential comes from the environment, never from the file.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::filter::{FilterConfig, HypoReference};
use crate::llm_correct::{EndpointConfig, RetryPolicy};
use crate::metrics::MetricMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub iteration: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_attempts: Option<usize>,
    pub threshold: Option<f64>,
    pub metric: Option<String>,
    pub hypo_reference: Option<String>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub endpoint: EndpointSection,
    pub sim: Option<SimSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_s: Option<f64>,
}

/// Simulation scenario knobs; present only in scenario files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_utts: Option<usize>,
    pub mean_len: Option<usize>,
    pub vocab_size: Option<usize>,
    pub mean_dur_s: Option<f64>,
    pub error_rates: Option<Vec<f64>>,
    pub fix_p: Option<f64>,
    pub decay_k: Option<f64>,
}

/// Fully-resolved settings for one NST iteration.
#[derive(Debug, Clone)]
pub struct IterationConfig {
    pub iteration_index: usize,
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub filter: FilterConfig,
    pub parallelism: usize,
    pub rng_seed: u64,
    pub endpoint: EndpointConfig,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            iteration_index: 1,
            batch_size: 40,
            retry: RetryPolicy::default(),
            filter: FilterConfig::default(),
            parallelism: 1,
            rng_seed: 0,
            endpoint: EndpointConfig {
                url: "https://api.openai.com/v1/chat/completions".into(),
                model: "gpt-4o".into(),
                timeout: Duration::from_secs(120),
            },
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iteration_index < 1 {
            return Err(Error::Config("iteration must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(Error::Config("max_attempts must be >= 1".into()));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        self.filter.validate()
    }
}

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<FileConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Resolves the file against the defaults, logging every fallback so a
    /// sparse config is auditable.
    pub fn resolve(&self) -> Result<IterationConfig> {
        let defaults = IterationConfig::default();
        let mut config = IterationConfig {
            iteration_index: self.iteration.unwrap_or(defaults.iteration_index),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            retry: RetryPolicy {
                max_attempts: self.max_attempts.unwrap_or(defaults.retry.max_attempts),
            },
            filter: defaults.filter,
            parallelism: self.parallelism.unwrap_or(defaults.parallelism),
            rng_seed: self.seed.unwrap_or(defaults.rng_seed),
            endpoint: defaults.endpoint,
        };
        match self.threshold {
            Some(t) => config.filter.threshold = t,
            None => log::info!("threshold not set, using default {}", config.filter.threshold),
        }
        if let Some(metric) = &self.metric {
            config.filter.metric_mode = metric.parse::<MetricMode>()?;
        }
        if let Some(reference) = &self.hypo_reference {
            config.filter.reference = match reference.as_str() {
                "corrected" => HypoReference::Corrected,
                "greedy" => HypoReference::Greedy,
                other => {
                    return Err(Error::Config(format!("unknown hypo_reference: {other}")))
                }
            };
        }
        if let Some(url) = &self.endpoint.url {
            config.endpoint.url = url.clone();
        }
        if let Some(model) = &self.endpoint.model {
            config.endpoint.model = model.clone();
        }
        if let Some(timeout_s) = self.endpoint.timeout_s {
            config.endpoint.timeout = Duration::from_secs_f64(timeout_s);
        }
        config.validate()?;
        Ok(config)
    }
}
