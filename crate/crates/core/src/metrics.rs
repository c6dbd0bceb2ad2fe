//! String-based MT metrics (BLEU, chrF++, TER) and system comparison.
//!
//! All three work on whitespace tokens of already-cleaned text. Corpus
//! scores pool sufficient statistics across segments, so they do not depend
//! on segment order or on how the work is split across threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("segment {index} has an empty reference")]
    EmptyReference { index: usize },
    #[error("no segments to score")]
    EmptyCorpus,
    #[error("baseline system `{0}` not among the reports")]
    UnknownBaseline(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method", content = "value")]
pub enum Smoothing {
    None,
    /// Replace a zero match count with this value.
    Floor(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChrfConfig {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
    pub strip_whitespace: bool,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig {
            char_order: 6,
            word_order: 2,
            beta: 2.0,
            strip_whitespace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerConfig {
    pub shifts: bool,
    pub max_shift_size: usize,
    pub max_shift_dist: usize,
}

impl Default for TerConfig {
    fn default() -> Self {
        TerConfig {
            shifts: true,
            max_shift_size: 10,
            max_shift_dist: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub bleu: BleuConfig,
    pub chrf: ChrfConfig,
    pub ter: TerConfig,
}

fn check_lengths<A, B>(hyps: &[A], refs: &[B]) -> Result<(), MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ngram_counts<T: Hash + Eq>(items: &[T], n: usize) -> HashMap<&[T], u32> {
    let mut m = HashMap::new();
    if n > 0 && items.len() >= n {
        for w in items.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Matched and total n-gram counts for one order.
fn overlap<T: Hash + Eq>(hyp: &[T], rf: &[T], n: usize) -> (u64, u64, u64) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(rf, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)) as u64)
        .sum();
    let hyp_total = hyp.len().saturating_sub(n - 1) as u64;
    let ref_total = rf.len().saturating_sub(n - 1) as u64;
    (matched, hyp_total, ref_total)
}

/// Pooled BLEU sufficient statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    fn zero(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn segment(hyp: &str, rf: &str, max_n: usize) -> Self {
        let (h, r) = (tokens(hyp), tokens(rf));
        let mut s = Self::zero(max_n);
        for n in 1..=max_n {
            let (m, t, _) = overlap(&h, &r, n);
            s.matches[n - 1] = m;
            s.totals[n - 1] = t;
        }
        s.hyp_len = h.len() as u64;
        s.ref_len = r.len() as u64;
        s
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    /// Score on the 0..100 scale.
    ///
    /// Orders for which the hypothesis side has no n-grams at all are left
    /// out of the geometric mean, so short identical corpora still score
    /// 100. A zero match count at a populated order gives 0 unless smoothed.
    pub fn score(&self, smoothing: Smoothing) -> f64 {
        if self.hyp_len == 0 {
            return if self.ref_len == 0 { 100.0 } else { 0.0 };
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let m = match (m, smoothing) {
                (0, Smoothing::None) => return 0.0,
                (0, Smoothing::Floor(v)) => v,
                (m, _) => m as f64,
            };
            log_sum += (m / t as f64).ln();
            orders += 1;
        }
        let precision = if orders == 0 {
            1.0
        } else {
            (log_sum / orders as f64).exp()
        };
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        100.0 * bp * precision
    }
}

pub fn bleu_stats<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    config: &BleuConfig,
) -> Result<BleuStats, MetricError> {
    check_lengths(hyps, refs)?;
    let n = config.max_n;
    Ok(hyps
        .par_iter()
        .zip(refs)
        .map(|(h, r)| BleuStats::segment(h.as_ref(), r.as_ref(), n))
        .reduce(|| BleuStats::zero(n), |a, b| a.merge(&b)))
}

/// Corpus BLEU over aligned hypothesis/reference segments.
pub fn bleu_corpus<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    config: &BleuConfig,
) -> Result<f64, MetricError> {
    Ok(bleu_stats(hyps, refs, config)?.score(config.smoothing))
}

/// Pooled chrF statistics, one `(matched, hyp_total, ref_total)` triple per
/// character order followed by one per word order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChrfStats {
    pub orders: Vec<(u64, u64, u64)>,
}

impl ChrfStats {
    fn zero(len: usize) -> Self {
        ChrfStats {
            orders: vec![(0, 0, 0); len],
        }
    }

    pub fn segment(hyp: &str, rf: &str, config: &ChrfConfig) -> Self {
        let chars = |s: &str| -> Vec<char> {
            if config.strip_whitespace {
                s.chars().filter(|c| !c.is_whitespace()).collect()
            } else {
                s.chars().collect()
            }
        };
        let (hc, rc) = (chars(hyp), chars(rf));
        let (hw, rw) = (tokens(hyp), tokens(rf));
        let mut orders = Vec::with_capacity(config.char_order + config.word_order);
        for n in 1..=config.char_order {
            orders.push(overlap(&hc, &rc, n));
        }
        for n in 1..=config.word_order {
            orders.push(overlap(&hw, &rw, n));
        }
        ChrfStats { orders }
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        }
        self
    }

    /// Mean per-order F-beta on the 0..100 scale. Orders with no n-grams on
    /// either side are skipped; if every order is skipped the score is 100.
    pub fn score(&self, beta: f64) -> f64 {
        let b2 = beta * beta;
        let mut sum = 0.0;
        let mut used = 0usize;
        for &(m, h, r) in &self.orders {
            if h == 0 && r == 0 {
                continue;
            }
            used += 1;
            let p = if h > 0 { m as f64 / h as f64 } else { 0.0 };
            let rc = if r > 0 { m as f64 / r as f64 } else { 0.0 };
            let denom = b2 * p + rc;
            if denom > 0.0 {
                sum += (1.0 + b2) * p * rc / denom;
            }
        }
        if used == 0 {
            100.0
        } else {
            100.0 * sum / used as f64
        }
    }
}

pub fn chrf_stats<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    config: &ChrfConfig,
) -> Result<ChrfStats, MetricError> {
    check_lengths(hyps, refs)?;
    let len = config.char_order + config.word_order;
    Ok(hyps
        .par_iter()
        .zip(refs)
        .map(|(h, r)| ChrfStats::segment(h.as_ref(), r.as_ref(), config))
        .reduce(|| ChrfStats::zero(len), |a, b| a.merge(&b)))
}

/// Corpus chrF++ (chrF with word n-grams when `word_order > 0`).
pub fn chrf_pp<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    config: &ChrfConfig,
) -> Result<f64, MetricError> {
    Ok(chrf_stats(hyps, refs, config)?.score(config.beta))
}

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance plus, for every reference position `j`, the hypothesis
/// index it is aligned against (or would be inserted before), and whether
/// each hypothesis word is an exact match in that alignment.
fn align<T: PartialEq>(hyp: &[T], rf: &[T]) -> (usize, Vec<usize>, Vec<bool>) {
    let (n, m) = (hyp.len(), rf.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, v) in d.iter_mut().take(w).enumerate() {
        *v = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != rf[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ref_pos = vec![0usize; m];
    let mut matched = vec![false; n];
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == rf[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                matched[i - 1] = same;
                ref_pos[j - 1] = i - 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            i -= 1;
        } else {
            ref_pos[j - 1] = i;
            j -= 1;
        }
    }
    (d[n * w + m], ref_pos, matched)
}

/// Moves `hyp[start..start + len]` so it begins before original index `dest`.
fn apply_shift<T: Clone>(hyp: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let block = &hyp[start..start + len];
    let mut out = Vec::with_capacity(hyp.len());
    if dest < start {
        out.extend_from_slice(&hyp[..dest]);
        out.extend_from_slice(block);
        out.extend_from_slice(&hyp[dest..start]);
        out.extend_from_slice(&hyp[start + len..]);
    } else {
        out.extend_from_slice(&hyp[..start]);
        out.extend_from_slice(&hyp[start + len..dest]);
        out.extend_from_slice(block);
        out.extend_from_slice(&hyp[dest..]);
    }
    out
}

/// Edit counts behind one TER value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerStats {
    pub edits: usize,
    pub shifts: usize,
    pub ref_len: usize,
}

impl TerStats {
    pub fn score(&self) -> f64 {
        100.0 * self.edits as f64 / self.ref_len as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct ShiftKey {
    // compared so that the preferred candidate is the maximum
    gain: usize,
    len: usize,
    start: std::cmp::Reverse<usize>,
    dest: std::cmp::Reverse<usize>,
}

/// Greedy block-shift search followed by edit distance.
///
/// Each round tries moving a hypothesis block (up to `max_shift_size`
/// words, containing at least one unmatched word) to a spot where it
/// matches the reference exactly, and keeps the move that lowers
/// `distance + shifts` the most. Ties go to the longer block, then the
/// leftmost origin, then the leftmost destination.
pub fn ter_tokens<T: PartialEq + Clone>(
    hyp: &[T],
    rf: &[T],
    config: &TerConfig,
) -> TerStats {
    let mut cur = hyp.to_vec();
    let mut shifts = 0;
    let (mut dist, mut ref_pos, mut matched) = align(&cur, rf);
    while config.shifts && dist > 1 {
        let mut best: Option<(ShiftKey, Vec<T>, usize)> = None;
        for start in 0..cur.len() {
            let max_len = config.max_shift_size.min(cur.len() - start);
            for len in 1..=max_len {
                if matched[start..start + len].iter().all(|&m| m) {
                    continue;
                }
                let block = &cur[start..start + len];
                for j in 0..rf.len().saturating_sub(len - 1) {
                    if rf[j..j + len] != *block {
                        continue;
                    }
                    let dest = ref_pos[j];
                    if (start..=start + len).contains(&dest) {
                        continue;
                    }
                    if dest.abs_diff(start) > config.max_shift_dist {
                        continue;
                    }
                    let cand = apply_shift(&cur, start, len, dest);
                    let d = edit_distance(&cand, rf);
                    if d + 1 >= dist {
                        continue;
                    }
                    let key = ShiftKey {
                        gain: dist - d,
                        len,
                        start: std::cmp::Reverse(start),
                        dest: std::cmp::Reverse(dest),
                    };
                    if best.as_ref().is_none_or(|b| key > b.0) {
                        best = Some((key, cand, d));
                    }
                }
            }
        }
        let Some((_, next, _)) = best else { break };
        cur = next;
        shifts += 1;
        (dist, ref_pos, matched) = align(&cur, rf);
    }
    TerStats {
        edits: dist + shifts,
        shifts,
        ref_len: rf.len(),
    }
}

/// Sentence TER of whitespace-tokenized strings.
pub fn ter(hyp: &str, rf: &str, config: &TerConfig) -> Result<f64, MetricError> {
    let r = tokens(rf);
    if r.is_empty() {
        return Err(MetricError::EmptyReference { index: 0 });
    }
    Ok(ter_tokens(&tokens(hyp), &r, config).score())
}

/// Corpus TER: total edits over total reference length.
pub fn ter_corpus<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    config: &TerConfig,
) -> Result<TerStats, MetricError> {
    check_lengths(hyps, refs)?;
    if let Some(index) = refs.iter().position(|r| tokens(r.as_ref()).is_empty()) {
        return Err(MetricError::EmptyReference { index });
    }
    Ok(hyps
        .par_iter()
        .zip(refs)
        .map(|(h, r)| ter_tokens(&tokens(h.as_ref()), &tokens(r.as_ref()), config))
        .reduce(
            || TerStats {
                edits: 0,
                shifts: 0,
                ref_len: 0,
            },
            |a, b| TerStats {
                edits: a.edits + b.edits,
                shifts: a.shifts + b.shifts,
                ref_len: a.ref_len + b.ref_len,
            },
        ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub bleu: f64,
    pub chrf_pp: f64,
    pub ter: f64,
}

impl Scores {
    fn zip(self, o: Scores, f: impl Fn(f64, f64) -> f64) -> Scores {
        Scores {
            bleu: f(self.bleu, o.bleu),
            chrf_pp: f(self.chrf_pp, o.chrf_pp),
            ter: f(self.ter, o.ter),
        }
    }
}

/// All three corpus scores for one language.
pub fn score_segments<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    config: &MetricConfig,
) -> Result<Scores, MetricError> {
    Ok(Scores {
        bleu: bleu_corpus(hyps, refs, &config.bleu)?,
        chrf_pp: chrf_pp(hyps, refs, &config.chrf)?,
        ter: ter_corpus(hyps, refs, &config.ter)?.score(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub per_language: BTreeMap<String, Scores>,
    pub config: MetricConfig,
}

fn mean_scores<'a>(it: impl Iterator<Item = &'a Scores>) -> Option<Scores> {
    let mut n = 0usize;
    let mut acc = Scores {
        bleu: 0.0,
        chrf_pp: 0.0,
        ter: 0.0,
    };
    for s in it {
        acc = acc.zip(*s, |a, b| a + b);
        n += 1;
    }
    (n > 0).then(|| {
        let k = n as f64;
        acc.zip(acc, |a, _| a / k)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub language: String,
    /// `None` marks a language the system does not cover.
    pub scores: Vec<Option<Scores>>,
    /// Difference from the baseline, where both sides are present.
    pub deltas: Vec<Option<Scores>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub systems: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// Languages covered by every system.
    pub common_languages: Vec<String>,
    /// Averages over `common_languages`.
    pub common_average: Vec<Option<Scores>>,
    pub common_average_delta: Vec<Option<Scores>>,
    /// Each system's average over the languages it covers.
    pub own_average: Vec<Option<Scores>>,
    pub own_average_delta: Vec<Option<Scores>>,
}

/// Lines up reports by language and computes deltas against `baseline`.
pub fn build_comparison(reports: &[EvalReport], baseline: &str) -> Result<Comparison, MetricError> {
    let base = reports
        .iter()
        .position(|r| r.system == baseline)
        .ok_or_else(|| MetricError::UnknownBaseline(baseline.to_string()))?;
    let languages: BTreeSet<&String> = reports.iter().flat_map(|r| r.per_language.keys()).collect();
    let delta = |a: Option<Scores>, b: Option<Scores>| Some(a?.zip(b?, |x, y| x - y));

    let rows = languages
        .iter()
        .map(|&lang| {
            let scores: Vec<_> = reports.iter().map(|r| r.per_language.get(lang).copied()).collect();
            let deltas = scores.iter().map(|&s| delta(s, scores[base])).collect();
            ComparisonRow {
                language: lang.clone(),
                scores,
                deltas,
            }
        })
        .collect::<Vec<_>>();
    let common: Vec<String> = rows
        .iter()
        .filter(|r| r.scores.iter().all(Option::is_some))
        .map(|r| r.language.clone())
        .collect();
    let common_average: Vec<_> = reports
        .iter()
        .map(|r| mean_scores(common.iter().map(|l| &r.per_language[l])))
        .collect();
    let own_average: Vec<_> = reports
        .iter()
        .map(|r| mean_scores(r.per_language.values()))
        .collect();
    let common_average_delta = common_average.iter().map(|&s| delta(s, common_average[base])).collect();
    let own_average_delta = own_average.iter().map(|&s| delta(s, own_average[base])).collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        systems: reports.iter().map(|r| r.system.clone()).collect(),
        rows,
        common_languages: common,
        common_average,
        common_average_delta,
        own_average,
        own_average_delta,
    })
}

impl Comparison {
    /// Plain-text table, one block of system columns per metric, two
    /// decimals, `-` for unsupported languages.
    pub fn to_table(&self) -> String {
        const COL: usize = 10;
        type Pick = fn(&Scores) -> f64;
        let metrics: [(&str, Pick); 3] = [
            ("chrF++", |s| s.chrf_pp),
            ("BLEU", |s| s.bleu),
            ("TER", |s| s.ter),
        ];
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let name_w = self
            .rows
            .iter()
            .map(|r| r.language.chars().count())
            .chain([15])
            .max()
            .unwrap_or(15)
            + 2;
        let block = COL * self.systems.len();
        let mut s = String::new();
        let _ = write!(s, "{:<name_w$}", "");
        for (m, _) in &metrics {
            let _ = write!(s, "| {m:<w$}", w = block);
        }
        s.push('\n');
        let _ = write!(s, "{:<name_w$}", "Language");
        for _ in &metrics {
            s.push_str("| ");
            for sys in &self.systems {
                let _ = write!(s, "{sys:>COL$}");
            }
        }
        s.push('\n');
        let rule = "-".repeat(name_w + (block + 2) * metrics.len());
        let _ = writeln!(s, "{rule}");
        let mut line = |label: &str, vals: &[Option<Scores>]| {
            let _ = write!(s, "{label:<name_w$}");
            for (_, f) in &metrics {
                s.push_str("| ");
                for v in vals {
                    let _ = write!(s, "{:>COL$}", cell(v.as_ref().map(f)));
                }
            }
            s.push('\n');
        };
        for r in &self.rows {
            line(&r.language, &r.scores);
        }
        line("Average", &self.own_average);
        line("Common average", &self.common_average);
        line(&format!("Δ vs {}", self.baseline), &self.common_average_delta);
        let _ = writeln!(s, "{rule}");
        let _ = writeln!(
            s,
            "Average: each system over its own languages. Common average: over the {} languages every system covers.",
            self.common_languages.len()
        );
        s
    }
}
