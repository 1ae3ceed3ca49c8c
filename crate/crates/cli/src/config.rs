//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//! threads = 1
//! warn_threshold = 1.2
//! max_train_examples = 20000
//!
//! [train]
//! epochs = 50
//! hidden = 300
//! feature_scale = [10.0, 1.0]
//! log_value = true
//!
//! # either a synthetic suite manifest ...
//! suite = "suite/manifest.toml"
//!
//! # ... or explicit collections
//! [[collections]]
//! id = "bayc"
//! role = "train"
//! events = "events/bayc.csv"
//! inception_timestamp = 1619740800
//! token_count = 10000
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nftproj::ingest::{load_events, EventFormat};
use nftproj::metrics::EvalConfig;
use nftproj::nn::{AdamConfig, TrainConfig};
use nftproj::series::build_series;
use nftproj::synth::{SuiteManifest, SuiteRole};
use nftproj::{CollectionSeries, SaleEvent};
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub window: Option<usize>,
    pub hidden: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub feature_scale: Option<[f64; 2]>,
    pub log_value: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionEntry {
    pub id: String,
    pub role: Role,
    pub events: PathBuf,
    #[serde(default)]
    pub format: Option<String>,
    pub inception_timestamp: u64,
    #[serde(default)]
    pub token_start: u64,
    pub token_count: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub warn_threshold: Option<f64>,
    #[serde(default)]
    pub max_train_examples: Option<usize>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub suite: Option<PathBuf>,
    #[serde(default)]
    pub collections: Vec<CollectionEntry>,
}

/// Collections of a run, split by role. Synthetic OOD corpora count as test.
pub struct Collections {
    pub train: Vec<CollectionSeries>,
    pub test: Vec<CollectionSeries>,
}

fn format_of(path: &Path, explicit: Option<&str>) -> Result<EventFormat> {
    let name = match explicit {
        Some(f) => f.to_string(),
        None => path.extension().and_then(|e| e.to_str()).unwrap_or("csv").to_string(),
    };
    name.parse().map_err(|e: String| UsageError(e).into())
}

pub fn load_event_file(path: &Path, format: Option<&str>) -> Result<Vec<SaleEvent>> {
    Ok(load_events(path, format_of(path, format)?)?)
}

impl RunConfig {
    /// Reads and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = &mut cfg.suite {
            *s = base.join(&*s);
        }
        for c in &mut cfg.collections {
            c.events = base.join(&c.events);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.suite.is_some() == !self.collections.is_empty() {
            return Err(UsageError("config needs exactly one of `suite` or `collections`".into()).into());
        }
        for p in self.suite.iter().chain(self.collections.iter().map(|c| &c.events)) {
            if !p.is_file() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        self.train_config().validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs.unwrap_or(d.epochs),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            window: t.window.unwrap_or(d.window),
            hidden: t.hidden.unwrap_or(d.hidden),
            dropout_rate: t.dropout_rate.unwrap_or(d.dropout_rate),
            adam: AdamConfig {
                lr: t.lr.unwrap_or(d.adam.lr),
                beta1: t.beta1.unwrap_or(d.adam.beta1),
                beta2: t.beta2.unwrap_or(d.adam.beta2),
                epsilon: t.epsilon.unwrap_or(d.adam.epsilon),
            },
            seed: self.seed,
            feature_scale: t.feature_scale.unwrap_or(d.feature_scale),
            log_value: t.log_value.unwrap_or(d.log_value),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            train: self.train_config(),
            max_train_examples: self.max_train_examples,
            warn_threshold: self.warn_threshold,
        }
    }

    pub fn collections(&self) -> Result<Collections> {
        let mut out = Collections {
            train: Vec::new(),
            test: Vec::new(),
        };
        if let Some(path) = &self.suite {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read suite {}", path.display()))?;
            let suite = SuiteManifest::from_toml(&text)?.generate()?;
            for (entry, corpus) in suite.manifest.collections.iter().zip(suite.corpora) {
                match entry.role {
                    SuiteRole::Train => out.train.push(corpus.truth),
                    SuiteRole::Test | SuiteRole::Ood => out.test.push(corpus.truth),
                }
            }
        }
        for c in &self.collections {
            let events = load_event_file(&c.events, c.format.as_deref())?;
            let tokens: Vec<u64> = (c.token_start..c.token_start + c.token_count).collect();
            let built = build_series(&c.id, &events, c.inception_timestamp, &tokens)?;
            match c.role {
                Role::Train => out.train.push(built.series),
                Role::Test => out.test.push(built.series),
            }
        }
        if out.train.is_empty() {
            return Err(UsageError("config has no training collections".into()).into());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn seed_is_required() {
        assert!(parse("suite = \"m.toml\"").is_err());
    }

    #[test]
    fn train_section_overrides_defaults() {
        let cfg = parse("seed = 3\nsuite = \"m.toml\"\n[train]\nepochs = 2\nlr = 0.01\n").unwrap();
        let t = cfg.train_config();
        assert_eq!(t.epochs, 2);
        assert_eq!(t.adam.lr, 0.01);
        assert_eq!(t.hidden, 300);
        assert_eq!(t.seed, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse("seed = 1\nsuite = \"m.toml\"\nepoch = 3\n").is_err());
    }
}
