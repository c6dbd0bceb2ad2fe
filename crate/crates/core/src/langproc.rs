//! Language-specific tier: rewrite rule sets for script variants and tone
//! marks, and rank-order character n-gram language identification.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::{self, LintIssue, MappingError, Rewriter};
use crate::normalize::normalize_unicode;

#[derive(Debug, Error)]
pub enum LangError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate left-hand side {lhs}")]
    DuplicateLhs { lhs: String },
    #[error("line {line}: empty left-hand side")]
    EmptyLhs { line: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty text")]
    EmptyText,
    #[error("no language profiles")]
    NoProfiles,
    #[error("invalid profile for `{language}`: {reason}")]
    InvalidProfile { language: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<MappingError> for LangError {
    fn from(e: MappingError) -> Self {
        match e {
            MappingError::Parse { line, message } => LangError::Parse { line, message },
            MappingError::EmptyLhs { line } => LangError::EmptyLhs { line },
            MappingError::DuplicateLhs { lhs } => LangError::DuplicateLhs { lhs },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub lhs: String,
    pub rhs: String,
}

/// An ordered, validated set of rewrite rules for one language.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub language: String,
    pub family: Option<String>,
    rules: Vec<Rule>,
    rewriter: Rewriter,
}

impl RuleSet {
    pub fn empty(language: impl Into<String>) -> Self {
        RuleSet {
            language: language.into(),
            family: None,
            rules: Vec::new(),
            rewriter: Rewriter::default(),
        }
    }

    /// Parses rule-file text. A `# family: <tag>` comment sets the family.
    pub fn parse(text: &str, language: impl Into<String>) -> Result<Self, LangError> {
        let lines = mapping::parse_mapping(text)?;
        let family = text.lines().find_map(|l| {
            l.trim()
                .strip_prefix('#')
                .and_then(|c| c.trim().strip_prefix("family:"))
                .map(|f| f.trim().to_string())
                .filter(|f| !f.is_empty())
        });
        let rules: Vec<Rule> = lines
            .into_iter()
            .map(|l| Rule { lhs: l.lhs, rhs: l.rhs })
            .collect();
        let rewriter = Rewriter::new(rules.iter().map(|r| (r.lhs.clone(), r.rhs.clone())));
        Ok(RuleSet {
            language: language.into(),
            family,
            rules,
            rewriter,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Reports rules whose output a second pass could rewrite again.
    pub fn lint(&self) -> Vec<LintIssue> {
        let pairs: Vec<(String, String)> = self
            .rules
            .iter()
            .map(|r| (r.lhs.clone(), r.rhs.clone()))
            .collect();
        mapping::lint_pairs(&pairs)
    }
}

/// Loads a rule file; the language code is the file stem (`yo.rules` → `yo`).
pub fn compile_ruleset(path: &Path) -> Result<RuleSet, LangError> {
    let text = fs::read_to_string(path)?;
    let language = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    RuleSet::parse(&text, language)
}

/// Rewrites all matches in one left-to-right, longest-match pass and
/// recomposes the result.
pub fn apply_ruleset(text: &str, rules: &RuleSet) -> String {
    if rules.rewriter.is_empty() {
        return normalize_unicode(text);
    }
    normalize_unicode(&rules.rewriter.apply(text))
}

/// Rule sets bundled with the crate, as `(language, file text)`.
pub const SHIPPED_RULESETS: &[(&str, &str)] = &[
    ("ee", include_str!("../data/rules/ee.rules")),
    ("ha", include_str!("../data/rules/ha.rules")),
    ("tw", include_str!("../data/rules/tw.rules")),
    ("yo", include_str!("../data/rules/yo.rules")),
];

pub fn shipped_ruleset(language: &str) -> Option<RuleSet> {
    SHIPPED_RULESETS
        .iter()
        .find(|(lang, _)| *lang == language)
        .map(|(lang, text)| RuleSet::parse(text, *lang).expect("shipped rule set parses"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub max_ngrams: usize,
    pub max_n: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            max_ngrams: 300,
            max_n: 4,
        }
    }
}

/// Ranked character n-grams for one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub language: String,
    /// `(gram, rank)` with ranks `1..=len`.
    pub ngrams: Vec<(String, usize)>,
}

impl LanguageProfile {
    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    fn validate(&self) -> Result<(), LangError> {
        let bad = |reason: &str| LangError::InvalidProfile {
            language: self.language.clone(),
            reason: reason.to_string(),
        };
        if self.ngrams.is_empty() {
            return Err(bad("no n-grams"));
        }
        for (i, (_, rank)) in self.ngrams.iter().enumerate() {
            if *rank != i + 1 {
                return Err(bad("ranks must be 1..len without gaps"));
            }
        }
        Ok(())
    }

    fn rank_index(&self) -> HashMap<&str, usize> {
        self.ngrams.iter().map(|(g, r)| (g.as_str(), *r)).collect()
    }
}

type Counts = HashMap<String, u64>;

fn count_ngrams(text: &str, max_n: usize, counts: &mut Counts) {
    let lowered = text.to_lowercase();
    let mut buf: Vec<char> = Vec::new();
    for word in lowered.split_whitespace() {
        buf.clear();
        buf.push(' ');
        buf.extend(word.chars());
        buf.push(' ');
        for n in 1..=max_n {
            for win in buf.windows(n) {
                if win.iter().all(|c| *c == ' ') {
                    continue;
                }
                let gram: String = win.iter().collect();
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
    }
}

fn rank_counts(counts: Counts, max_ngrams: usize) -> Vec<(String, usize)> {
    let mut items: Vec<(String, u64)> = counts.into_iter().collect();
    items.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items
        .into_iter()
        .take(max_ngrams)
        .enumerate()
        .map(|(i, (g, _))| (g, i + 1))
        .collect()
}

/// Builds a rank-order profile from the most frequent character n-grams.
///
/// Words are padded with one space on each side; grams consisting only of
/// padding are skipped. Ties in frequency are broken by n-gram order, so
/// the result does not depend on how the counting is parallelised.
pub fn build_profile<S>(corpus: &[S], language: &str, config: &ProfileConfig) -> Result<LanguageProfile, LangError>
where
    S: AsRef<str> + Sync,
{
    let counts = corpus
        .par_iter()
        .fold(Counts::new, |mut acc, text| {
            count_ngrams(text.as_ref(), config.max_n, &mut acc);
            acc
        })
        .reduce(Counts::new, |mut a, b| {
            if a.len() < b.len() {
                return merge(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    if counts.is_empty() {
        return Err(LangError::EmptyCorpus);
    }
    Ok(LanguageProfile {
        language: language.to_string(),
        ngrams: rank_counts(counts, config.max_ngrams),
    })
}

fn merge(mut a: Counts, b: Counts) -> Counts {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Out-of-place distance between a text's profile and a language profile.
/// N-grams missing from the language profile cost the profile's length.
pub fn out_of_place(text_profile: &[(String, usize)], profile: &LanguageProfile) -> u64 {
    let index = profile.rank_index();
    let penalty = profile.len() as u64;
    text_profile
        .iter()
        .map(|(g, r)| match index.get(g.as_str()) {
            Some(&p) => (*r as u64).abs_diff(p as u64),
            None => penalty,
        })
        .sum()
}

/// Ranks every profile's language by out-of-place distance to `text`,
/// ascending, ties broken by language code.
pub fn identify_language(
    text: &str,
    profiles: &[LanguageProfile],
    config: &ProfileConfig,
) -> Result<Vec<(String, u64)>, LangError> {
    if profiles.is_empty() {
        return Err(LangError::NoProfiles);
    }
    let mut counts = Counts::new();
    count_ngrams(text, config.max_n, &mut counts);
    if counts.is_empty() {
        return Err(LangError::EmptyText);
    }
    let text_profile = rank_counts(counts, config.max_ngrams);
    let mut ranked: Vec<(String, u64)> = profiles
        .iter()
        .map(|p| (p.language.clone(), out_of_place(&text_profile, p)))
        .collect();
    ranked.sort_by(|a, b| match a.1.cmp(&b.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    Ok(ranked)
}

/// Writes profiles as JSON lines.
pub fn write_profiles<W: Write>(mut out: W, profiles: &[LanguageProfile]) -> Result<(), LangError> {
    for p in profiles {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads and validates JSON-lines profiles.
pub fn read_profiles<R: BufRead>(input: R) -> Result<Vec<LanguageProfile>, LangError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: LanguageProfile = serde_json::from_str(&line)?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}
