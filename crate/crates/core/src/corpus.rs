//! Ingestion, deduplication, resource manifests and export.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::Xxh3;

use crate::normalize::{decode_slice, is_wide_encoding, DecodePolicy, NormalizeError};
use crate::statval::{SentencePair, ValidationVerdict};

/// Per-language inventory of the reference 40-language collection, in the
/// format read by [`read_manifest_tsv`].
pub const REFERENCE_INVENTORY_TSV: &str = include_str!("../data/languages40.tsv");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("duplicate language `{0}` in manifest")]
    DuplicateLanguage(String),
    #[error("negative count {0}")]
    NegativeCount(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Encoding(#[from] NormalizeError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    /// `src<TAB>tgt`, exactly two columns.
    Tsv2,
    /// One [`DatasetRecord`]-shaped JSON object per line.
    Jsonl,
    /// One monolingual segment per line.
    Mono,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDescriptor {
    pub path: PathBuf,
    pub format: SourceFormat,
    pub src_lang: String,
    #[serde(default)]
    pub tgt_lang: Option<String>,
    /// Declared byte encoding; UTF-8 when absent.
    #[serde(default)]
    pub encoding: Option<String>,
}

/// One exported row. Monolingual records have no target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub src_lang: String,
    #[serde(default)]
    pub tgt_lang: Option<String>,
    pub src_text: String,
    #[serde(default)]
    pub tgt_text: Option<String>,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ValidationVerdict>,
}

impl DatasetRecord {
    /// The record as a sentence pair, if it has a target side.
    pub fn as_pair(&self) -> Option<SentencePair> {
        Some(SentencePair {
            id: self.id.clone(),
            src_lang: self.src_lang.clone(),
            tgt_lang: self.tgt_lang.clone()?,
            src_text: self.src_text.clone(),
            tgt_text: self.tgt_text.clone()?,
            origin: self.origin.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub origin: String,
    pub line_no: usize,
    pub reason: String,
}

#[derive(Deserialize)]
struct JsonlRow {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    src_lang: Option<String>,
    #[serde(default)]
    tgt_lang: Option<String>,
    src_text: String,
    #[serde(default)]
    tgt_text: Option<String>,
    #[serde(default)]
    origin: Option<String>,
    #[serde(default)]
    verdict: Option<ValidationVerdict>,
}

/// Streaming reader over one source. Each line is decoded on its own with
/// the source's encoding; blank lines are skipped; malformed lines are
/// yielded as errors and reading continues.
pub struct Ingest<R> {
    reader: R,
    buf: Vec<u8>,
    line_no: usize,
    desc: SourceDescriptor,
    origin: String,
    policy: DecodePolicy,
}

impl<R: BufRead> Ingest<R> {
    /// `reader` must yield bytes in `desc.encoding`, which has to be a
    /// single-byte or UTF-8 encoding (see [`ingest_source`] for UTF-16).
    pub fn from_reader(reader: R, desc: SourceDescriptor) -> Self {
        let origin = desc.path.display().to_string();
        Ingest {
            reader,
            buf: Vec::new(),
            line_no: 0,
            desc,
            origin,
            policy: DecodePolicy::Replace,
        }
    }

    pub fn with_policy(mut self, policy: DecodePolicy) -> Self {
        self.policy = policy;
        self
    }

    fn malformed(&self, reason: impl Into<String>) -> MalformedLine {
        MalformedLine {
            origin: self.origin.clone(),
            line_no: self.line_no,
            reason: reason.into(),
        }
    }

    fn default_id(&self) -> String {
        format!("{}:{}", self.origin, self.line_no)
    }

    fn parse(&self, line: &str) -> Result<DatasetRecord, MalformedLine> {
        match self.desc.format {
            SourceFormat::Tsv2 => {
                let mut cols = line.split('\t');
                let (Some(src), Some(tgt), None) = (cols.next(), cols.next(), cols.next()) else {
                    return Err(self.malformed(format!(
                        "expected 2 tab-separated columns, found {}",
                        line.split('\t').count()
                    )));
                };
                let tgt_lang = self
                    .desc
                    .tgt_lang
                    .clone()
                    .ok_or_else(|| self.malformed("tsv2 source needs tgt_lang"))?;
                Ok(DatasetRecord {
                    id: self.default_id(),
                    src_lang: self.desc.src_lang.clone(),
                    tgt_lang: Some(tgt_lang),
                    src_text: src.to_string(),
                    tgt_text: Some(tgt.to_string()),
                    origin: self.origin.clone(),
                    verdict: None,
                })
            }
            SourceFormat::Jsonl => {
                let row: JsonlRow =
                    serde_json::from_str(line).map_err(|e| self.malformed(e.to_string()))?;
                Ok(DatasetRecord {
                    id: row.id.unwrap_or_else(|| self.default_id()),
                    src_lang: row.src_lang.unwrap_or_else(|| self.desc.src_lang.clone()),
                    tgt_lang: row.tgt_lang.or_else(|| {
                        row.tgt_text.as_ref().and(self.desc.tgt_lang.clone())
                    }),
                    src_text: row.src_text,
                    tgt_text: row.tgt_text,
                    origin: row.origin.unwrap_or_else(|| self.origin.clone()),
                    verdict: row.verdict,
                })
            }
            SourceFormat::Mono => Ok(DatasetRecord {
                id: self.default_id(),
                src_lang: self.desc.src_lang.clone(),
                tgt_lang: None,
                src_text: line.to_string(),
                tgt_text: None,
                origin: self.origin.clone(),
                verdict: None,
            }),
        }
    }
}

impl<R: BufRead> Iterator for Ingest<R> {
    type Item = Result<DatasetRecord, MalformedLine>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.line_no += 1;
                    return Some(Err(self.malformed(e.to_string())));
                }
            }
            self.line_no += 1;
            let mut raw = self.buf.as_slice();
            raw = raw.strip_suffix(b"\n").unwrap_or(raw);
            raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let line = match decode_slice(raw, self.desc.encoding.as_deref(), self.policy) {
                Ok(l) => l,
                Err(e) => return Some(Err(self.malformed(e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

pub type SourceReader = Box<dyn BufRead + Send>;

/// Opens a source for streaming ingestion. UTF-16 files are decoded whole
/// up front, since their line breaks cannot be found byte-wise.
pub fn ingest_source(desc: &SourceDescriptor, policy: DecodePolicy) -> Result<Ingest<SourceReader>, CorpusError> {
    let wide = is_wide_encoding(desc.encoding.as_deref())?;
    let file = File::open(&desc.path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CorpusError::MissingFile(desc.path.clone()),
        _ => CorpusError::Io(e),
    })?;
    if !wide {
        return Ok(Ingest::from_reader(Box::new(BufReader::new(file)) as SourceReader, desc.clone()).with_policy(policy));
    }
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes)?;
    let mut body = bytes.as_slice();
    for bom in [&[0xFF, 0xFE][..], &[0xFE, 0xFF][..]] {
        body = body.strip_prefix(bom).unwrap_or(body);
    }
    let text = decode_slice(body, desc.encoding.as_deref(), policy)?;
    let mut utf8 = desc.clone();
    utf8.encoding = None;
    Ok(Ingest::from_reader(Box::new(Cursor::new(text.into_bytes())) as SourceReader, utf8).with_policy(policy))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupCounts {
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub kept: usize,
    pub dropped: usize,
    pub per_origin: BTreeMap<String, DedupCounts>,
}

/// Exact-duplicate filter keyed on language pair and both texts.
///
/// Keys are 128-bit hashes of the length-prefixed fields.
#[derive(Debug, Default)]
pub struct Deduper {
    seen: HashSet<u128>,
    report: DedupReport,
}

impl Deduper {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(rec: &DatasetRecord) -> u128 {
        let mut h = Xxh3::new();
        for field in [
            Some(rec.src_lang.as_str()),
            rec.tgt_lang.as_deref(),
            Some(rec.src_text.as_str()),
            rec.tgt_text.as_deref(),
        ] {
            match field {
                Some(s) => {
                    h.update(&[1]);
                    h.update(&(s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
                None => h.update(&[0]),
            }
        }
        h.digest128()
    }

    /// Returns true for the first occurrence of a record's key.
    pub fn admit(&mut self, rec: &DatasetRecord) -> bool {
        let fresh = self.seen.insert(Self::key(rec));
        let entry = self.report.per_origin.entry(rec.origin.clone()).or_default();
        if fresh {
            entry.kept += 1;
            self.report.kept += 1;
        } else {
            entry.dropped += 1;
            self.report.dropped += 1;
        }
        fresh
    }

    pub fn report(&self) -> &DedupReport {
        &self.report
    }

    pub fn into_report(self) -> DedupReport {
        self.report
    }
}

/// Drops exact duplicates after their first occurrence.
pub fn dedup_records<I>(records: I) -> (Vec<DatasetRecord>, DedupReport)
where
    I: IntoIterator<Item = DatasetRecord>,
{
    let mut d = Deduper::new();
    let kept = records.into_iter().filter(|r| d.admit(r)).collect();
    (kept, d.into_report())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AudioTier {
    High,
    Established,
    Moderate,
    Low,
}

fn check_count(v: f64) -> Result<f64, CorpusError> {
    if v < 0.0 || v.is_nan() {
        Err(CorpusError::NegativeCount(v))
    } else {
        Ok(v)
    }
}

/// Text tier from millions of tokens: 1 from 2000, 2 from 900, 3 from 250,
/// 4 below. Lower edges are inclusive.
pub fn classify_text_tier(tokens_millions: f64) -> Result<u8, CorpusError> {
    let t = check_count(tokens_millions)?;
    Ok(if t >= 2000.0 {
        1
    } else if t >= 900.0 {
        2
    } else if t >= 250.0 {
        3
    } else {
        4
    })
}

/// Audio tier from hours: High from 1000, Established from 500, Moderate
/// from 100, Low below.
pub fn classify_audio_tier(hours: f64) -> Result<AudioTier, CorpusError> {
    let h = check_count(hours)?;
    Ok(if h >= 1000.0 {
        AudioTier::High
    } else if h >= 500.0 {
        AudioTier::Established
    } else if h >= 100.0 {
        AudioTier::Moderate
    } else {
        AudioTier::Low
    })
}

/// Whitespace-delimited token count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInput {
    pub language: String,
    pub tokens_millions: f64,
    /// `None` when the language has no audio at all (not zero hours).
    pub audio_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub language: String,
    pub tokens_millions: f64,
    pub audio_hours: Option<f64>,
    pub text_tier: u8,
    pub audio_tier: Option<AudioTier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTotals {
    pub tokens_millions: f64,
    pub audio_hours: f64,
    pub language_count: usize,
    pub languages_with_audio: usize,
    pub languages_without_audio: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub totals: ManifestTotals,
    /// Largest token count over the smallest positive one; `None` without
    /// any positive count.
    pub disparity_ratio: Option<f64>,
}

/// Builds a manifest; entries keep their input order.
pub fn build_manifest(inputs: &[ManifestInput]) -> Result<CorpusManifest, CorpusError> {
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(inputs.len());
    for inp in inputs {
        if !seen.insert(inp.language.as_str()) {
            return Err(CorpusError::DuplicateLanguage(inp.language.clone()));
        }
        entries.push(ManifestEntry {
            language: inp.language.clone(),
            tokens_millions: inp.tokens_millions,
            audio_hours: inp.audio_hours,
            text_tier: classify_text_tier(inp.tokens_millions)?,
            audio_tier: inp.audio_hours.map(classify_audio_tier).transpose()?,
        });
    }
    let tokens_millions = entries.iter().map(|e| e.tokens_millions).sum();
    let audio_hours = entries.iter().filter_map(|e| e.audio_hours).sum();
    let with_audio = entries.iter().filter(|e| e.audio_hours.is_some()).count();
    let max = entries.iter().map(|e| e.tokens_millions).fold(0.0, f64::max);
    let min_pos = entries
        .iter()
        .map(|e| e.tokens_millions)
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let disparity_ratio = min_pos.is_finite().then(|| max / min_pos);
    Ok(CorpusManifest {
        totals: ManifestTotals {
            tokens_millions,
            audio_hours,
            language_count: entries.len(),
            languages_with_audio: with_audio,
            languages_without_audio: entries.len() - with_audio,
        },
        entries,
        disparity_ratio,
    })
}

/// Reads manifest rows: `language<TAB>tokens_millions<TAB>audio_hours`, with
/// `-` or an empty third column for missing audio. `#` lines are comments;
/// thousands separators are accepted.
pub fn read_manifest_tsv<R: BufRead>(input: R) -> Result<Vec<ManifestInput>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 2 or 3 columns, found {}", cols.len()),
            });
        }
        let num = |s: &str| -> Result<f64, CorpusError> {
            s.replace(',', "").parse::<f64>().map_err(|_| CorpusError::Parse {
                line: line_no,
                message: format!("bad number `{s}`"),
            })
        };
        let audio_hours = match cols.get(2) {
            None | Some(&"") | Some(&"-") => None,
            Some(v) => Some(num(v)?),
        };
        out.push(ManifestInput {
            language: cols[0].to_string(),
            tokens_millions: num(cols[1])?,
            audio_hours,
        });
    }
    Ok(out)
}

/// Per-language token counts (in millions) from corpus records, counting the
/// source side under `src_lang` and the target side under `tgt_lang`.
pub fn manifest_inputs_from_records<'a, I>(records: I) -> Vec<ManifestInput>
where
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let mut tokens: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *tokens.entry(&r.src_lang).or_insert(0) += count_tokens(&r.src_text);
        if let (Some(lang), Some(text)) = (&r.tgt_lang, &r.tgt_text) {
            *tokens.entry(lang).or_insert(0) += count_tokens(text);
        }
    }
    tokens
        .into_iter()
        .map(|(lang, n)| ManifestInput {
            language: lang.to_string(),
            tokens_millions: n as f64 / 1e6,
            audio_hours: None,
        })
        .collect()
}

fn tier_name(tier: u8) -> &'static str {
    match tier {
        1 => "primary",
        2 => "established",
        3 => "emerging",
        _ => "constrained",
    }
}

impl CorpusManifest {
    /// Aligned plain-text table: one row per language, then totals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16}{:>14}{:>12}  {:<16}{:<12}",
            "Language", "Tokens (M)", "Hours", "Text tier", "Audio tier"
        );
        let _ = writeln!(s, "{}", "-".repeat(72));
        for e in &self.entries {
            let hours = e.audio_hours.map_or("-".to_string(), fmt_thousands);
            let audio = e.audio_tier.map_or("-".to_string(), |t| format!("{t:?}"));
            let _ = writeln!(
                s,
                "{:<16}{:>14}{:>12}  {:<16}{:<12}",
                e.language,
                fmt_thousands(e.tokens_millions),
                hours,
                format!("{} ({})", e.text_tier, tier_name(e.text_tier)),
                audio
            );
        }
        let _ = writeln!(s, "{}", "-".repeat(72));
        let _ = writeln!(
            s,
            "{:<16}{:>14}{:>12}",
            "Total",
            fmt_thousands(self.totals.tokens_millions),
            fmt_thousands(self.totals.audio_hours)
        );
        let _ = writeln!(
            s,
            "languages: {} ({} with audio, {} without)",
            self.totals.language_count,
            self.totals.languages_with_audio,
            self.totals.languages_without_audio
        );
        match self.disparity_ratio {
            Some(d) => {
                let _ = writeln!(s, "disparity (max/min tokens): {d:.1}x");
            }
            None => {
                let _ = writeln!(s, "disparity (max/min tokens): -");
            }
        }
        s
    }

    /// Languages grouped by text tier, in entry order.
    pub fn text_tier_groups(&self) -> BTreeMap<u8, Vec<String>> {
        let mut out: BTreeMap<u8, Vec<String>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.text_tier).or_default().push(e.language.clone());
        }
        out
    }

    /// Languages grouped by audio tier, in entry order.
    pub fn audio_tier_groups(&self) -> BTreeMap<AudioTier, Vec<String>> {
        let mut out: BTreeMap<AudioTier, Vec<String>> = BTreeMap::new();
        for e in &self.entries {
            if let Some(t) = e.audio_tier {
                out.entry(t).or_default().push(e.language.clone());
            }
        }
        out
    }

    /// Horizontal bar chart of token counts as a standalone SVG document.
    pub fn tokens_svg(&self) -> String {
        let bars: Vec<(&str, f64)> = self
            .entries
            .iter()
            .map(|e| (e.language.as_str(), e.tokens_millions))
            .collect();
        bar_chart_svg("Tokens (millions)", &bars)
    }

    /// Bar chart of audio hours; languages without audio are omitted.
    pub fn hours_svg(&self) -> String {
        let bars: Vec<(&str, f64)> = self
            .entries
            .iter()
            .filter_map(|e| e.audio_hours.map(|h| (e.language.as_str(), h)))
            .collect();
        bar_chart_svg("Audio (hours)", &bars)
    }
}

fn fmt_thousands(v: f64) -> String {
    let s = format!("{v:.2}");
    let (int, frac) = s.split_once('.').unwrap_or((&s, "00"));
    let (sign, digits) = match int.strip_prefix('-') {
        Some(d) => ("-", d),
        None => ("", int),
    };
    let mut grouped = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{sign}{grouped}.{frac}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bar_chart_svg(title: &str, bars: &[(&str, f64)]) -> String {
    const ROW: f64 = 18.0;
    const LABEL_W: f64 = 120.0;
    const PLOT_W: f64 = 480.0;
    const VALUE_W: f64 = 90.0;
    const TOP: f64 = 30.0;
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let width = LABEL_W + PLOT_W + VALUE_W;
    let height = TOP + ROW * bars.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-size="13" font-weight="bold">{}</text>"#,
        LABEL_W,
        xml_escape(title)
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = TOP + ROW * i as f64;
        let w = if max > 0.0 { PLOT_W * v / max } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_W - 6.0,
            y + 12.0,
            xml_escape(label)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL_W:.1}" y="{:.1}" width="{w:.2}" height="{:.1}" fill="#4878a8"/>"##,
            y + 2.0,
            ROW - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            LABEL_W + w + 4.0,
            y + 12.0,
            fmt_thousands(*v)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes records as JSON lines and returns the row count.
pub fn export_records<'a, I>(records: I, path: &Path) -> Result<usize, CorpusError>
where
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let mut out = BufWriter::new(File::create(path)?);
    let n = write_records(records, &mut out)?;
    out.flush()?;
    Ok(n)
}

pub fn write_records<'a, I, W>(records: I, mut out: W) -> Result<usize, CorpusError>
where
    I: IntoIterator<Item = &'a DatasetRecord>,
    W: Write,
{
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}
