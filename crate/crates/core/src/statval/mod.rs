//! Statistical bitext validation.
//!
//! Each language pair gets a [`RatioModel`] fitted on the target/source
//! character-length ratios of a sample of its pairs. The model combines a
//! Gaussian KDE (which supplies smoothed quartiles), Tukey fences whose
//! multiplier grows with the coefficient of variation, and a z-score bound.
//! A separate containment check catches targets copied from the source.
//!
//! Fitting is a sequential fold per pair; validation only reads the model and
//! can run in parallel over records.

pub mod kde;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::rngs::Xoshiro256PlusPlus;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::langproc::{identify_language, LanguageProfile, ProfileConfig};
use kde::{silverman_bandwidth, sorted_quantile, GaussianKde};

/// Bisection tolerance for KDE quartiles.
pub const QUARTILE_TOL: f64 = 1e-6;

/// Points in the density grid stored with each model.
pub const GRID_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatError {
    #[error("source text is empty")]
    EmptySource,
    #[error("target text is empty")]
    EmptyTarget,
    #[error("sample of {n} ratios is below the minimum of {min}")]
    InsufficientSample { n: usize, min: usize },
    #[error("sample contains a non-finite ratio")]
    NonFinite,
    #[error("distribution has zero variance")]
    DegenerateDistribution,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LanguagePair {
    pub src: String,
    pub tgt: String,
}

impl LanguagePair {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>) -> Self {
        LanguagePair {
            src: src.into(),
            tgt: tgt.into(),
        }
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

/// One bitext record, already normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub src_text: String,
    pub tgt_text: String,
    pub origin: String,
}

impl SentencePair {
    pub fn language_pair(&self) -> LanguagePair {
        LanguagePair::new(&self.src_lang, &self.tgt_lang)
    }
}

/// Target length over source length, in Unicode scalars. An empty target
/// gives 0.
pub fn char_ratio(pair: &SentencePair) -> Result<f64, StatError> {
    let src = pair.src_text.chars().count();
    if src == 0 {
        return Err(StatError::EmptySource);
    }
    Ok(pair.tgt_text.chars().count() as f64 / src as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// First `sample_size` pairs in input order.
    #[default]
    First,
    /// Seeded uniform sample without replacement, kept in input order.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub sample_size: usize,
    pub min_sample: usize,
    pub sample_mode: SampleMode,
    pub seed: u64,
    pub z_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub cv_ref: f64,
    pub overlap_threshold: f64,
    pub overlap_check: bool,
    pub langid_gate: bool,
    /// Per-pair overlap thresholds keyed `src-tgt`.
    pub overlap_overrides: BTreeMap<String, f64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            sample_size: 10_000,
            min_sample: 100,
            sample_mode: SampleMode::First,
            seed: 0,
            z_max: 3.0,
            k_min: 1.5,
            k_max: 3.0,
            cv_ref: 0.5,
            overlap_threshold: 0.6,
            overlap_check: true,
            langid_gate: false,
            overlap_overrides: BTreeMap::new(),
        }
    }
}

impl ValidationConfig {
    /// Checks documented ranges; returns the offending key.
    pub fn check(&self) -> Result<(), String> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.sample_size == 0 {
            return Err("sample_size".into());
        }
        if self.min_sample < 2 || self.min_sample > self.sample_size {
            return Err("min_sample".into());
        }
        if !(self.z_max > 0.0 && self.z_max.is_finite()) {
            return Err("z_max".into());
        }
        if !(self.k_min > 0.0 && self.k_min <= self.k_max && self.k_max.is_finite()) {
            return Err("k_min/k_max".into());
        }
        if !(self.cv_ref > 0.0 && self.cv_ref.is_finite()) {
            return Err("cv_ref".into());
        }
        if !in_unit(self.overlap_threshold) {
            return Err("overlap_threshold".into());
        }
        for (key, v) in &self.overlap_overrides {
            if !in_unit(*v) {
                return Err(format!("overlap_overrides.{key}"));
            }
        }
        Ok(())
    }

    pub fn overlap_threshold_for(&self, pair: &LanguagePair) -> f64 {
        self.overlap_overrides
            .get(&pair.to_string())
            .copied()
            .unwrap_or(self.overlap_threshold)
    }
}

/// Fence multiplier, linear in the coefficient of variation and clamped to
/// `[k_min, k_max]`: `k_min + (k_max - k_min) * min(1, cv / cv_ref)`.
pub fn adaptive_multiplier(cv: f64, config: &ValidationConfig) -> f64 {
    let t = if cv.is_nan() { 1.0 } else { (cv.max(0.0) / config.cv_ref).min(1.0) };
    config.k_min + (config.k_max - config.k_min) * t
}

/// Tukey fences `[q1 - k*iqr, q3 + k*iqr]`.
pub fn tukey_fences(q1: f64, q3: f64, k: f64) -> (f64, f64) {
    let iqr = q3 - q1;
    (q1 - k * iqr, q3 + k * iqr)
}

/// Fitted character-ratio distribution for one language pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    pub pair: LanguagePair,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub kde_bandwidth: f64,
    /// Density of the fitted KDE on an evenly spaced grid, `(x, f(x))`.
    pub kde_points: Vec<(f64, f64)>,
    pub sample_min: f64,
    pub sample_max: f64,
    pub raw_q1: f64,
    pub raw_q3: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub cv: f64,
    pub k: f64,
    pub fence_lo: f64,
    pub fence_hi: f64,
    pub z_max: f64,
    pub degenerate: bool,
}

impl RatioModel {
    pub fn in_fences(&self, ratio: f64) -> bool {
        ratio >= self.fence_lo && ratio <= self.fence_hi
    }
}

/// Picks the fitting sample from a pair's ratios (in input order).
pub fn select_sample(ratios: &[f64], config: &ValidationConfig) -> Vec<f64> {
    if ratios.len() <= config.sample_size {
        return ratios.to_vec();
    }
    match config.sample_mode {
        SampleMode::First => ratios[..config.sample_size].to_vec(),
        SampleMode::Random => {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
            let mut idx = rand::seq::index::sample(&mut rng, ratios.len(), config.sample_size).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| ratios[i]).collect()
        }
    }
}

/// Builds the KDE used by a fit, or `None` for a zero-variance sample.
pub fn fit_kde(sample: &[f64]) -> Option<GaussianKde> {
    let n = sample.len();
    if n == 0 {
        return None;
    }
    let (_, sd) = mean_sd(sample);
    if sd == 0.0 {
        return None;
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let raw_iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    Some(GaussianKde::new(sorted, silverman_bandwidth(sd, raw_iqr, n)))
}

fn mean_sd(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits a ratio model to `sample`, which is used as given (see
/// [`select_sample`] for drawing it from a pair's ratios).
pub fn fit_ratio_model(
    pair: LanguagePair,
    sample: &[f64],
    config: &ValidationConfig,
) -> Result<RatioModel, StatError> {
    let n = sample.len();
    if n < config.min_sample {
        return Err(StatError::InsufficientSample {
            n,
            min: config.min_sample,
        });
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatError::NonFinite);
    }
    let (mean, stddev) = mean_sd(sample);
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let raw_q1 = sorted_quantile(&sorted, 0.25);
    let raw_q3 = sorted_quantile(&sorted, 0.75);
    let (sample_min, sample_max) = (sorted[0], sorted[n - 1]);

    if stddev == 0.0 {
        let v = mean;
        return Ok(RatioModel {
            pair,
            n,
            mean: v,
            stddev: 0.0,
            // nominal positive width; a point mass has no meaningful bandwidth
            kde_bandwidth: f64::EPSILON * v.abs().max(1.0),
            kde_points: Vec::new(),
            sample_min,
            sample_max,
            raw_q1,
            raw_q3,
            q1: v,
            q3: v,
            iqr: 0.0,
            cv: 0.0,
            k: adaptive_multiplier(0.0, config),
            fence_lo: v,
            fence_hi: v,
            z_max: config.z_max,
            degenerate: true,
        });
    }

    let h = silverman_bandwidth(stddev, raw_q3 - raw_q1, n);
    let kde = GaussianKde::new(sorted, h);
    let q1 = kde.quantile(0.25, QUARTILE_TOL);
    let q3 = kde.quantile(0.75, QUARTILE_TOL);
    // finite so the model stays representable in JSON
    let cv = if mean == 0.0 { f64::MAX } else { stddev / mean.abs() };
    let k = adaptive_multiplier(cv, config);
    let (fence_lo, fence_hi) = tukey_fences(q1, q3, k);
    let lo = sample_min - 3.0 * h;
    let hi = sample_max + 3.0 * h;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let kde_points = (0..GRID_POINTS)
        .map(|i| {
            let x = lo + step * i as f64;
            (x, kde.density(x))
        })
        .collect();
    Ok(RatioModel {
        pair,
        n,
        mean,
        stddev,
        kde_bandwidth: h,
        kde_points,
        sample_min,
        sample_max,
        raw_q1,
        raw_q3,
        q1,
        q3,
        iqr: q3 - q1,
        cv,
        k,
        fence_lo,
        fence_hi,
        z_max: config.z_max,
        degenerate: false,
    })
}

pub fn zscore(ratio: f64, model: &RatioModel) -> Result<f64, StatError> {
    if model.degenerate || model.stddev == 0.0 {
        return Err(StatError::DegenerateDistribution);
    }
    Ok((ratio - model.mean) / model.stddev)
}

/// Fraction of the target's distinct character n-grams (n = min(4, target
/// length)) that also occur in the source.
pub fn overlap_containment(pair: &SentencePair) -> Result<f64, StatError> {
    let tgt: Vec<char> = pair.tgt_text.chars().collect();
    if tgt.is_empty() {
        return Err(StatError::EmptyTarget);
    }
    let n = tgt.len().min(4);
    let src: Vec<char> = pair.src_text.chars().collect();
    let src_grams: HashSet<&[char]> = src.windows(n).collect();
    let tgt_grams: HashSet<&[char]> = tgt.windows(n).collect();
    let shared = tgt_grams.iter().filter(|g| src_grams.contains(*g)).count();
    Ok(shared as f64 / tgt_grams.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Reason {
    RatioOutOfFence,
    ZExceeded,
    OverlapArtifact,
    LanguageMismatch,
    EmptySource,
    EmptyTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub id: String,
    pub accepted: bool,
    pub ratio: f64,
    pub z: Option<f64>,
    pub overlap: f64,
    pub reasons: BTreeSet<Reason>,
}

impl ValidationVerdict {
    fn from_reasons(id: &str, ratio: f64, z: Option<f64>, overlap: f64, reasons: BTreeSet<Reason>) -> Self {
        ValidationVerdict {
            id: id.to_string(),
            accepted: reasons.is_empty(),
            ratio,
            z,
            overlap,
            reasons,
        }
    }
}

/// Runs every check on one pair. Checks combine by OR.
///
/// `model` is `None` for pairs whose language pair had too few records to
/// fit; the ratio and z checks are then skipped. An empty source or target
/// short-circuits to that single reason. The language gate only applies when
/// `profiles` contains a profile for the target language.
pub fn validate_pair(
    pair: &SentencePair,
    model: Option<&RatioModel>,
    config: &ValidationConfig,
    profiles: Option<&[LanguageProfile]>,
) -> ValidationVerdict {
    let mut reasons = BTreeSet::new();
    let ratio = match char_ratio(pair) {
        Ok(r) => r,
        Err(_) => {
            reasons.insert(Reason::EmptySource);
            return ValidationVerdict::from_reasons(&pair.id, 0.0, None, 0.0, reasons);
        }
    };
    let overlap = match overlap_containment(pair) {
        Ok(o) => o,
        Err(_) => {
            reasons.insert(Reason::EmptyTarget);
            return ValidationVerdict::from_reasons(&pair.id, 0.0, None, 0.0, reasons);
        }
    };
    let mut z = None;
    if let Some(model) = model {
        if !model.in_fences(ratio) {
            reasons.insert(Reason::RatioOutOfFence);
        }
        if let Ok(score) = zscore(ratio, model) {
            if score.abs() > model.z_max {
                reasons.insert(Reason::ZExceeded);
            }
            z = Some(score);
        }
    }
    if config.overlap_check && overlap > config.overlap_threshold_for(&pair.language_pair()) {
        reasons.insert(Reason::OverlapArtifact);
    }
    if config.langid_gate {
        if let Some(profiles) = profiles {
            if profiles.iter().any(|p| p.language == pair.tgt_lang) {
                let top = identify_language(&pair.tgt_text, profiles, &ProfileConfig::default())
                    .ok()
                    .and_then(|r| r.into_iter().next());
                if top.map(|(lang, _)| lang != pair.tgt_lang).unwrap_or(true) {
                    reasons.insert(Reason::LanguageMismatch);
                }
            }
        }
    }
    ValidationVerdict::from_reasons(&pair.id, ratio, z, overlap, reasons)
}

/// Serialized form of a set of fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: ValidationConfig,
    pub models: Vec<RatioModel>,
}
