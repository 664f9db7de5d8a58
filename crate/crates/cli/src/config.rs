//! Pipeline configuration: TOML file, environment override of its path and
//! one command-line flag per leaf key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use epoch_emotion::classifier::ClassifierConfig;
use epoch_emotion::extract::ExtractConfig;
use epoch_emotion::signal::DEFAULT_SAMPLE_RATE;
use serde::{Deserialize, Serialize};

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "EPOCH_EMOTION_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CorpusConfig {
    pub speakers: usize,
    pub per_emotion: usize,
    /// Mean voiced duration per utterance in seconds.
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { speakers: 4, per_emotion: 10, duration_s: 1.0, seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PipelineConfig {
    /// Worker threads; 1 keeps every output byte-reproducible.
    pub jobs: usize,
    pub extract: ExtractConfig,
    pub classifier: ClassifierConfig,
    pub corpus: CorpusConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            jobs: 1,
            extract: ExtractConfig::default(),
            classifier: ClassifierConfig::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            bail!("jobs must be >= 1");
        }
        self.extract.validate(DEFAULT_SAMPLE_RATE)?;
        self.classifier.validate()?;
        let c = &self.corpus;
        if c.speakers == 0 || c.per_emotion == 0 || !(c.duration_s > 0.1) {
            bail!("corpus needs speakers >= 1, per-emotion >= 1 and duration-s > 0.1");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Sets the leaf at `key` (dotted kebab-case path) from a TOML literal.
    /// Bare words that don't parse as TOML are taken as strings.
    pub fn set(&mut self, key: &str, literal: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                toml::Value::Table(t) => t.get_mut(part).with_context(|| format!("unknown config key `{key}`"))?,
                _ => bail!("unknown config key `{key}`"),
            };
        }
        if slot.is_table() {
            bail!("`{key}` is a section, not a value");
        }
        *slot = parse_literal(literal);
        *self = root.try_into().with_context(|| format!("bad value `{literal}` for `{key}`"))?;
        Ok(())
    }

    /// Dotted paths of every non-table value, in document order.
    pub fn leaf_keys() -> Vec<String> {
        let root = toml::Value::try_from(Self::default()).expect("default config serializes");
        let mut out = Vec::new();
        collect_leaves(&root, String::new(), &mut out);
        out
    }
}

fn collect_leaves(v: &toml::Value, prefix: String, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_leaves(child, p, out);
            }
        }
        _ => out.push(prefix),
    }
}

fn parse_literal(s: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {s}")).map(|w| w.v).unwrap_or_else(|_| toml::Value::String(s.to_string()))
}

/// Explicit path, then the environment variable, then built-in defaults.
pub fn resolve_path(explicit: Option<PathBuf>) -> Option<PathBuf> {
    explicit.or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_and_reload_match() {
        let mut c = PipelineConfig::default();
        c.classifier.lda_dim = 40;
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("jobz = 2").is_err());
        assert!(PipelineConfig::from_toml("[classifier]\nlda = 3").is_err());
        assert!(PipelineConfig::default().set("classifier.nope", "1").is_err());
    }

    #[test]
    fn set_parses_literals() {
        let mut c = PipelineConfig::default();
        c.set("classifier.mlp.hidden", "[64, 64]").unwrap();
        c.set("classifier.backend", "gmm").unwrap();
        c.set("extract.vad.threshold", "0.1").unwrap();
        c.set("jobs", "3").unwrap();
        assert_eq!(c.classifier.mlp.hidden, vec![64, 64]);
        assert_eq!(c.classifier.backend, epoch_emotion::classifier::Backend::Gmm);
        assert_eq!(c.extract.vad.threshold, 0.1);
        assert_eq!(c.jobs, 3);
        assert!(c.set("jobs", "many").is_err());
        assert!(c.set("classifier", "1").is_err());
    }

    #[test]
    fn leaves_cover_nested_sections() {
        let keys = PipelineConfig::leaf_keys();
        for k in ["jobs", "extract.vad.threshold", "classifier.lda-dim", "classifier.mlp.hidden", "corpus.seed"] {
            assert!(keys.iter().any(|x| x == k), "{k} missing from {keys:?}");
        }
    }
}
