//! The pipeline configuration file (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use corpusqc_core::corpus::SourceDescriptor;
use corpusqc_core::metrics::MetricConfig;
use corpusqc_core::normalize::{DecodePolicy, GeneralConfig};
use corpusqc_core::review::Thresholds;
use corpusqc_core::statval::ValidationConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WORKERS_ENV: &str = "CORPUSQC_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub strip_markup: bool,
    pub standardize_symbols: bool,
    pub normalize_unicode: bool,
    pub decode_policy: DecodePolicy,
    /// Use the built-in rule sets for languages not listed in `rulesets`.
    pub shipped_rules: bool,
    /// Rule file per language code.
    pub rulesets: BTreeMap<String, PathBuf>,
    pub dedup: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            strip_markup: true,
            standardize_symbols: true,
            normalize_unicode: true,
            decode_policy: DecodePolicy::Replace,
            shipped_rules: true,
            rulesets: BTreeMap::new(),
            dedup: true,
        }
    }
}

impl NormalizationConfig {
    pub fn general(&self) -> GeneralConfig {
        GeneralConfig {
            strip_markup: self.strip_markup,
            standardize_symbols: self.standardize_symbols,
            normalize_unicode: self.normalize_unicode,
            decode_policy: self.decode_policy,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestConfig {
    /// Per-language inventory TSV; without it the manifest counts tokens of
    /// the processed records.
    pub inventory: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Language profiles (JSONL) for the language-ID gate.
    pub profiles: Option<PathBuf>,
    pub sources: Vec<SourceDescriptor>,
    pub normalization: NormalizationConfig,
    pub validation: ValidationConfig,
    pub review: Thresholds,
    pub metrics: MetricConfig,
    pub manifest: ManifestConfig,
}

impl PipelineConfig {
    /// Reads and checks a config file. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sources {
            fix(&mut s.path);
        }
        for p in self.normalization.rulesets.values_mut() {
            fix(p);
        }
        self.output_dir.as_mut().map(fix);
        self.profiles.as_mut().map(fix);
        self.manifest.inventory.as_mut().map(fix);
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.workers == Some(0) {
            return Err(ConfigError::invalid("workers", "must be at least 1"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.src_lang.is_empty() {
                return Err(ConfigError::invalid(format!("sources[{i}].src_lang"), "must be non-empty"));
            }
            if s.format == corpusqc_core::corpus::SourceFormat::Tsv2 && s.tgt_lang.is_none() {
                return Err(ConfigError::invalid(format!("sources[{i}].tgt_lang"), "required for tsv2"));
            }
            if let Some(enc) = &s.encoding {
                corpusqc_core::normalize::is_wide_encoding(Some(enc))
                    .map_err(|e| ConfigError::invalid(format!("sources[{i}].encoding"), e.to_string()))?;
            }
        }
        self.validation
            .check()
            .map_err(|key| ConfigError::invalid(format!("validation.{key}"), "out of range"))?;
        if self.validation.langid_gate && self.profiles.is_none() {
            return Err(ConfigError::invalid("profiles", "required when validation.langid_gate is set"));
        }
        self.review
            .check()
            .map_err(|key| ConfigError::invalid(format!("review.{key}"), "out of range"))?;
        let m = &self.metrics;
        if m.bleu.max_n == 0 {
            return Err(ConfigError::invalid("metrics.bleu.max_n", "must be at least 1"));
        }
        if let corpusqc_core::metrics::Smoothing::Floor(v) = m.bleu.smoothing {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::invalid("metrics.bleu.smoothing", "floor must be in (0, 1]"));
            }
        }
        if !(m.chrf.beta > 0.0 && m.chrf.beta.is_finite()) {
            return Err(ConfigError::invalid("metrics.chrf.beta", "must be positive"));
        }
        if m.chrf.char_order + m.chrf.word_order == 0 {
            return Err(ConfigError::invalid("metrics.chrf", "needs at least one n-gram order"));
        }
        if m.ter.max_shift_size == 0 {
            return Err(ConfigError::invalid("metrics.ter.max_shift_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Worker count: flag, then environment, then config, then core count.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>, config: Option<usize>) -> Result<usize, ConfigError> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(ConfigError::invalid("--workers", "must be at least 1"));
        }
        return Ok(n);
    }
    if let Some(raw) = env {
        return match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(ConfigError::invalid(WORKERS_ENV, format!("not a positive integer: `{raw}`"))),
        };
    }
    if let Some(n) = config {
        return Ok(n);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}
