//! General-tier text cleaning, applied to every record before any
//! language-specific processing.
//!
//! Stage order is fixed: decode, strip markup, standardize symbols, Unicode
//! composition. Each stage is idempotent on its own; [`GeneralNormalizer`]
//! iterates the composed stages to a fixpoint so the whole pipeline is too.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use crate::entities::NAMED_ENTITIES;
use crate::mapping::{parse_mapping, Rewriter};

/// Maximum distance, in scalars, between a tag's `<` and its closing `>`.
pub const MAX_TAG_SPAN: usize = 1024;

const SHIPPED_SYMBOLS: &str = include_str!("../data/symbols.map");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("undecodable input at byte offset {offset}")]
    Decode { offset: usize },
    #[error("unsupported encoding `{0}`")]
    UnknownEncoding(String),
    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),
}

/// Undecoded input line as read from a source corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub bytes: Vec<u8>,
    pub declared_encoding: Option<String>,
    pub origin: String,
    pub line_no: usize,
}

impl RawRecord {
    pub fn new(bytes: Vec<u8>, origin: impl Into<String>, line_no: usize) -> Result<Self, NormalizeError> {
        let origin = origin.into();
        if origin.is_empty() {
            return Err(NormalizeError::InvalidRecord("origin must be non-empty"));
        }
        if line_no == 0 {
            return Err(NormalizeError::InvalidRecord("line numbers start at 1"));
        }
        Ok(RawRecord {
            bytes,
            declared_encoding: None,
            origin,
            line_no,
        })
    }

    pub fn with_encoding(mut self, label: impl Into<String>) -> Self {
        self.declared_encoding = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodePolicy {
    #[default]
    Replace,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Decode,
    StripMarkup,
    StandardizeSymbols,
    NormalizeUnicode,
}

/// Cleaned text plus the ordered list of stages that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanText {
    pub text: String,
    pub applied_steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Utf8,
    Latin1,
    Windows1252,
    Utf16Le,
    Utf16Be,
}

/// True for encodings whose line breaks are not single `\n` bytes.
pub fn is_wide_encoding(label: Option<&str>) -> Result<bool, NormalizeError> {
    Ok(matches!(resolve_encoding(label)?, Encoding::Utf16Le | Encoding::Utf16Be))
}

fn resolve_encoding(label: Option<&str>) -> Result<Encoding, NormalizeError> {
    let Some(label) = label else {
        return Ok(Encoding::Utf8);
    };
    let norm: String = label
        .trim()
        .chars()
        .filter(|c| *c != '-' && *c != '_')
        .collect::<String>()
        .to_ascii_lowercase();
    match norm.as_str() {
        "utf8" => Ok(Encoding::Utf8),
        "latin1" | "iso88591" | "l1" => Ok(Encoding::Latin1),
        "windows1252" | "cp1252" => Ok(Encoding::Windows1252),
        "utf16le" => Ok(Encoding::Utf16Le),
        "utf16be" => Ok(Encoding::Utf16Be),
        _ => Err(NormalizeError::UnknownEncoding(label.to_string())),
    }
}

/// Decodes a record's bytes using its declared encoding (UTF-8 when absent).
///
/// Under [`DecodePolicy::Replace`] each undecodable byte becomes U+FFFD.
pub fn decode_bytes(record: &RawRecord, policy: DecodePolicy) -> Result<String, NormalizeError> {
    decode_slice(&record.bytes, record.declared_encoding.as_deref(), policy)
}

/// [`decode_bytes`] without the record wrapper.
pub fn decode_slice(bytes: &[u8], encoding: Option<&str>, policy: DecodePolicy) -> Result<String, NormalizeError> {
    match resolve_encoding(encoding)? {
        Encoding::Utf8 => decode_utf8(bytes, policy),
        Encoding::Latin1 => Ok(bytes.iter().map(|&b| b as char).collect()),
        Encoding::Windows1252 => decode_cp1252(bytes, policy),
        Encoding::Utf16Le => decode_utf16(bytes, policy, u16::from_le_bytes),
        Encoding::Utf16Be => decode_utf16(bytes, policy, u16::from_be_bytes),
    }
}

fn decode_utf8(bytes: &[u8], policy: DecodePolicy) -> Result<String, NormalizeError> {
    let mut out = String::with_capacity(bytes.len());
    let mut pos = 0;
    loop {
        match std::str::from_utf8(&bytes[pos..]) {
            Ok(s) => {
                out.push_str(s);
                return Ok(out);
            }
            Err(e) => {
                let good = e.valid_up_to();
                // valid prefix, re-slicing is infallible
                out.push_str(std::str::from_utf8(&bytes[pos..pos + good]).unwrap_or_default());
                let offset = pos + good;
                if policy == DecodePolicy::Strict {
                    return Err(NormalizeError::Decode { offset });
                }
                let bad = e.error_len().unwrap_or(bytes.len() - offset);
                out.extend(std::iter::repeat_n('\u{FFFD}', bad));
                pos = offset + bad;
            }
        }
    }
}

// 0x80..=0x9F; None marks the five undefined positions.
const CP1252_HIGH: [Option<char>; 32] = [
    Some('\u{20AC}'), None, Some('\u{201A}'), Some('\u{0192}'), Some('\u{201E}'), Some('\u{2026}'),
    Some('\u{2020}'), Some('\u{2021}'), Some('\u{02C6}'), Some('\u{2030}'), Some('\u{0160}'),
    Some('\u{2039}'), Some('\u{0152}'), None, Some('\u{017D}'), None, None, Some('\u{2018}'),
    Some('\u{2019}'), Some('\u{201C}'), Some('\u{201D}'), Some('\u{2022}'), Some('\u{2013}'),
    Some('\u{2014}'), Some('\u{02DC}'), Some('\u{2122}'), Some('\u{0161}'), Some('\u{203A}'),
    Some('\u{0153}'), None, Some('\u{017E}'), Some('\u{0178}'),
];

fn decode_cp1252(bytes: &[u8], policy: DecodePolicy) -> Result<String, NormalizeError> {
    let mut out = String::with_capacity(bytes.len());
    for (offset, &b) in bytes.iter().enumerate() {
        let ch = match b {
            0x80..=0x9F => CP1252_HIGH[(b - 0x80) as usize],
            _ => Some(b as char),
        };
        match (ch, policy) {
            (Some(c), _) => out.push(c),
            (None, DecodePolicy::Replace) => out.push('\u{FFFD}'),
            (None, DecodePolicy::Strict) => return Err(NormalizeError::Decode { offset }),
        }
    }
    Ok(out)
}

fn decode_utf16(
    bytes: &[u8],
    policy: DecodePolicy,
    unit: fn([u8; 2]) -> u16,
) -> Result<String, NormalizeError> {
    let units: Vec<u16> = bytes.chunks_exact(2).map(|c| unit([c[0], c[1]])).collect();
    let mut out = String::with_capacity(units.len());
    let mut offset = 0;
    for r in char::decode_utf16(units.iter().copied()) {
        match (r, policy) {
            (Ok(c), _) => {
                offset += 2 * c.len_utf16();
                out.push(c);
            }
            (Err(_), DecodePolicy::Replace) => {
                offset += 2;
                out.push('\u{FFFD}');
            }
            (Err(_), DecodePolicy::Strict) => return Err(NormalizeError::Decode { offset }),
        }
    }
    if bytes.len() % 2 == 1 {
        match policy {
            DecodePolicy::Replace => out.push('\u{FFFD}'),
            DecodePolicy::Strict => {
                return Err(NormalizeError::Decode {
                    offset: bytes.len() - 1,
                })
            }
        }
    }
    Ok(out)
}

/// Canonical composition (NFC).
pub fn normalize_unicode(text: &str) -> String {
    if is_nfc_quick(text.chars()) == IsNormalized::Yes {
        return text.to_string();
    }
    text.nfc().collect()
}

/// Removes tag spans and decodes character entities, repeating until the
/// text stops changing so that escaped markup is also removed.
///
/// A `<` opens a tag only when followed by an ASCII letter, `/`, `!` or `?`
/// and closed by a `>` within [`MAX_TAG_SPAN`] scalars; otherwise it is kept
/// as literal text. Unknown entities pass through verbatim.
pub fn strip_markup(text: &str) -> String {
    if !text.contains(['<', '&']) {
        return text.to_string();
    }
    let mut cur = text.to_string();
    loop {
        let next = strip_markup_once(&cur);
        // every change strictly shortens the text, so this terminates
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn strip_markup_once(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '<' if opens_tag(chars.get(i + 1)) => {
                let window_end = (i + 1 + MAX_TAG_SPAN).min(chars.len());
                match chars[i + 1..window_end].iter().position(|&c| c == '>') {
                    Some(rel) => i += rel + 2,
                    None => {
                        out.push('<');
                        i += 1;
                    }
                }
            }
            '&' => match decode_entity(&chars[i..]) {
                Some((ch, used)) => {
                    out.push(ch);
                    i += used;
                }
                None => {
                    out.push('&');
                    i += 1;
                }
            },
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

fn opens_tag(next: Option<&char>) -> bool {
    matches!(next, Some(c) if c.is_ascii_alphabetic() || matches!(c, '/' | '!' | '?'))
}

/// Decodes an entity at the start of `s` (which begins with `&`); returns the
/// character and the number of scalars consumed.
fn decode_entity(s: &[char]) -> Option<(char, usize)> {
    const MAX_NAME: usize = 32;
    let semi = s.iter().take(MAX_NAME + 3).position(|&c| c == ';')?;
    let body: String = s[1..semi].iter().collect();
    let ch = if let Some(num) = body.strip_prefix('#') {
        let cp = if let Some(hex) = num.strip_prefix(['x', 'X']) {
            if hex.is_empty() || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
                return None;
            }
            u32::from_str_radix(hex, 16).ok()?
        } else {
            if num.is_empty() || !num.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            num.parse::<u32>().ok()?
        };
        if cp == 0 {
            return None;
        }
        char::from_u32(cp)?
    } else {
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_alphanumeric()) {
            return None;
        }
        let idx = NAMED_ENTITIES
            .binary_search_by(|(name, _)| (*name).cmp(body.as_str()))
            .ok()?;
        NAMED_ENTITIES[idx].1
    };
    Some((ch, semi + 1))
}

fn shipped_symbols() -> &'static Rewriter {
    static TABLE: OnceLock<Rewriter> = OnceLock::new();
    TABLE.get_or_init(|| {
        let lines = parse_mapping(SHIPPED_SYMBOLS).expect("shipped symbol table parses");
        Rewriter::new(lines.into_iter().map(|l| (l.lhs, l.rhs)))
    })
}

/// The shipped symbol mapping table in its file form.
pub fn shipped_symbol_table() -> &'static str {
    SHIPPED_SYMBOLS
}

fn is_line_break(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{0085}' | '\u{2028}' | '\u{2029}')
}

/// Maps quotes and dashes through the shipped table, drops control
/// characters, collapses whitespace and trims.
///
/// Whitespace runs collapse to `\n` when they contain a line break and to a
/// single space otherwise.
pub fn standardize_symbols(text: &str) -> String {
    let mapped = shipped_symbols().apply(text);
    let mut out = String::with_capacity(mapped.len());
    // pending whitespace: None, Some(false) = space, Some(true) = newline
    let mut pending: Option<bool> = None;
    for c in mapped.chars() {
        if c.is_whitespace() {
            let nl = is_line_break(c);
            pending = Some(pending.unwrap_or(false) || nl);
        } else if c.is_control() {
            continue;
        } else {
            if let Some(nl) = pending.take() {
                if !out.is_empty() {
                    out.push(if nl { '\n' } else { ' ' });
                }
            }
            out.push(c);
        }
    }
    out
}

/// Stage toggles for the general tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralConfig {
    pub strip_markup: bool,
    pub standardize_symbols: bool,
    pub normalize_unicode: bool,
    pub decode_policy: DecodePolicy,
}

impl Default for GeneralConfig {
    fn default() -> Self {
        GeneralConfig {
            strip_markup: true,
            standardize_symbols: true,
            normalize_unicode: true,
            decode_policy: DecodePolicy::Replace,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GeneralNormalizer {
    config: GeneralConfig,
}

impl GeneralNormalizer {
    /// Upper bound on rounds of the composed stages. Real inputs settle in one
    /// or two; later rounds only matter when composition creates new markup
    /// (e.g. U+037E composing to `;` and closing an entity).
    const MAX_ROUNDS: usize = 8;

    pub fn new(config: GeneralConfig) -> Self {
        GeneralNormalizer { config }
    }

    pub fn config(&self) -> &GeneralConfig {
        &self.config
    }

    pub fn clean_record(&self, record: &RawRecord) -> Result<CleanText, NormalizeError> {
        let text = decode_bytes(record, self.config.decode_policy)?;
        let mut out = self.clean(&text);
        out.applied_steps.insert(0, Step::Decode);
        Ok(out)
    }

    /// Runs the post-decode stages on already-decoded text.
    pub fn clean(&self, text: &str) -> CleanText {
        let mut cur = self.round(text);
        for _ in 1..Self::MAX_ROUNDS {
            let next = self.round(&cur);
            if next == cur {
                break;
            }
            cur = next;
        }
        CleanText {
            text: cur,
            applied_steps: self.steps(),
        }
    }

    fn steps(&self) -> Vec<Step> {
        let mut steps = Vec::with_capacity(3);
        if self.config.strip_markup {
            steps.push(Step::StripMarkup);
        }
        if self.config.standardize_symbols {
            steps.push(Step::StandardizeSymbols);
        }
        if self.config.normalize_unicode {
            steps.push(Step::NormalizeUnicode);
        }
        steps
    }

    fn round(&self, text: &str) -> String {
        let mut cur = if self.config.strip_markup {
            strip_markup(text)
        } else {
            text.to_string()
        };
        if self.config.standardize_symbols {
            cur = standardize_symbols(&cur);
        }
        if self.config.normalize_unicode {
            cur = normalize_unicode(&cur);
        }
        cur
    }
}
