//! Codepoint-sequence mapping files and the longest-match rewriter shared by
//! the symbol table and language rule sets.
//!
//! File format: one mapping per line, `LHS -> RHS`, each side a space-separated
//! list of `U+XXXX` codepoints. `→` is accepted in place of `->`. `#` starts a
//! comment. The right-hand side may be empty, which deletes the match.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: empty left-hand side")]
    EmptyLhs { line: usize },
    #[error("duplicate left-hand side {lhs}")]
    DuplicateLhs { lhs: String },
}

/// One parsed line of a mapping file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingLine {
    pub line: usize,
    pub lhs: String,
    pub rhs: String,
}

/// Parses `U+XXXX U+YYYY` into a string. An empty or blank input yields "".
pub fn parse_codepoints(s: &str) -> Result<String, String> {
    let mut out = String::new();
    for tok in s.split_whitespace() {
        let hex = tok
            .strip_prefix("U+")
            .or_else(|| tok.strip_prefix("u+"))
            .ok_or_else(|| format!("expected U+XXXX, found `{tok}`"))?;
        if hex.is_empty() || hex.len() > 6 {
            return Err(format!("bad codepoint `{tok}`"));
        }
        let cp = u32::from_str_radix(hex, 16).map_err(|_| format!("bad codepoint `{tok}`"))?;
        let ch = char::from_u32(cp).ok_or_else(|| format!("not a scalar value `{tok}`"))?;
        out.push(ch);
    }
    Ok(out)
}

/// Formats a string as `U+XXXX` tokens.
pub fn format_codepoints(s: &str) -> String {
    s.chars()
        .map(|c| format!("U+{:04X}", c as u32))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses a mapping file, checking for empty and duplicate left-hand sides.
pub fn parse_mapping(text: &str) -> Result<Vec<MappingLine>, MappingError> {
    let mut out: Vec<MappingLine> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if body.trim().is_empty() {
            continue;
        }
        let (lhs, rhs) = split_arrow(body).ok_or_else(|| MappingError::Parse {
            line,
            message: "expected `LHS -> RHS`".to_string(),
        })?;
        let lhs = parse_codepoints(lhs).map_err(|message| MappingError::Parse { line, message })?;
        let rhs = parse_codepoints(rhs).map_err(|message| MappingError::Parse { line, message })?;
        if lhs.is_empty() {
            return Err(MappingError::EmptyLhs { line });
        }
        if seen.insert(lhs.clone(), line).is_some() {
            return Err(MappingError::DuplicateLhs {
                lhs: format_codepoints(&lhs),
            });
        }
        out.push(MappingLine { line, lhs, rhs });
    }
    Ok(out)
}

fn split_arrow(body: &str) -> Option<(&str, &str)> {
    if let Some(pos) = body.find("->") {
        return Some((&body[..pos], &body[pos + 2..]));
    }
    body.find('→')
        .map(|pos| (&body[..pos], &body[pos + '→'.len_utf8()..]))
}

/// Single-pass, left-to-right, longest-match string rewriter.
#[derive(Debug, Clone, Default)]
pub struct Rewriter {
    // candidates keyed by first char, longest lhs first
    by_first: HashMap<char, Vec<(String, String)>>,
}

impl Rewriter {
    pub fn new<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut by_first: HashMap<char, Vec<(String, String)>> = HashMap::new();
        for (lhs, rhs) in pairs {
            if let Some(first) = lhs.chars().next() {
                by_first.entry(first).or_default().push((lhs, rhs));
            }
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        Rewriter { by_first }
    }

    pub fn is_empty(&self) -> bool {
        self.by_first.is_empty()
    }

    pub fn apply(&self, text: &str) -> String {
        if self.by_first.is_empty() {
            return text.to_string();
        }
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(ch) = rest.chars().next() {
            let hit = self
                .by_first
                .get(&ch)
                .and_then(|cands| cands.iter().find(|(lhs, _)| rest.starts_with(lhs.as_str())));
            match hit {
                Some((lhs, rhs)) => {
                    out.push_str(rhs);
                    rest = &rest[lhs.len()..];
                }
                None => {
                    out.push(ch);
                    rest = &rest[ch.len_utf8()..];
                }
            }
        }
        out
    }
}

/// Reasons a mapping set may not be idempotent under [`Rewriter::apply`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LintIssue {
    /// Some right-hand side shares characters with a left-hand side in a way
    /// that a second pass could match.
    Overlap { rhs_of: String, lhs: String },
    /// A deletion rule can join its neighbours into a new multi-character match.
    DeletionJoins { deleted: String, lhs: String },
}

/// Checks that applying the mapping twice equals applying it once.
///
/// Identity rules (`lhs == rhs`) never introduce new text and are exempt as
/// producers.
pub fn lint_pairs(pairs: &[(String, String)]) -> Vec<LintIssue> {
    let mut issues = Vec::new();
    for (lhs_p, rhs) in pairs {
        if lhs_p == rhs {
            continue;
        }
        for (lhs, _) in pairs {
            if rhs.is_empty() {
                if lhs.chars().count() >= 2 {
                    issues.push(LintIssue::DeletionJoins {
                        deleted: format_codepoints(lhs_p),
                        lhs: format_codepoints(lhs),
                    });
                }
            } else if overlaps(rhs, lhs) {
                issues.push(LintIssue::Overlap {
                    rhs_of: format_codepoints(lhs_p),
                    lhs: format_codepoints(lhs),
                });
            }
        }
    }
    issues
}

/// True when `a` and `b` can be laid over each other with at least one
/// position in common and agreeing characters on the overlap.
fn overlaps(a: &str, b: &str) -> bool {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (la, lb) = (a.len() as isize, b.len() as isize);
    // offset = start of b relative to start of a
    for offset in (1 - lb)..la {
        let lo = offset.max(0);
        let hi = (offset + lb).min(la);
        if lo >= hi {
            continue;
        }
        if (lo..hi).all(|i| a[i as usize] == b[(i - offset) as usize]) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rules_and_comments() {
        let text = "# header\nU+006F U+0323 -> U+1ECD  # dot below\n\nU+0041 → U+0061\nU+200B ->\n";
        let lines = parse_mapping(text).unwrap();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].lhs, "o\u{0323}");
        assert_eq!(lines[0].rhs, "\u{1ECD}");
        assert_eq!(lines[1].line, 4);
        assert_eq!(lines[2].rhs, "");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            parse_mapping("U+0061 U+0062"),
            Err(MappingError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_mapping("U+zz -> U+0061"),
            Err(MappingError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_mapping("U+D800 -> U+0061"),
            Err(MappingError::Parse { .. })
        ));
        assert_eq!(
            parse_mapping("\n -> U+0061"),
            Err(MappingError::EmptyLhs { line: 2 })
        );
        assert_eq!(
            parse_mapping("U+0061 -> U+0062\nU+0061 -> U+0063"),
            Err(MappingError::DuplicateLhs {
                lhs: "U+0061".into()
            })
        );
    }

    #[test]
    fn rewriter_prefers_longest_match() {
        let rw = Rewriter::new(vec![
            ("a".to_string(), "1".to_string()),
            ("ab".to_string(), "2".to_string()),
        ]);
        assert_eq!(rw.apply("abac"), "21c");
        assert_eq!(rw.apply(""), "");
    }

    #[test]
    fn lint_flags_overlaps() {
        let ok = vec![("x".to_string(), "y".to_string())];
        assert!(lint_pairs(&ok).is_empty());
        let identity = vec![("\u{1ECD}".to_string(), "\u{1ECD}".to_string())];
        assert!(lint_pairs(&identity).is_empty());
        let chained = vec![
            ("x".to_string(), "a".to_string()),
            ("ay".to_string(), "b".to_string()),
        ];
        assert!(!lint_pairs(&chained).is_empty());
        let inner = vec![
            ("x".to_string(), "a".to_string()),
            ("bac".to_string(), "z".to_string()),
        ];
        assert!(!lint_pairs(&inner).is_empty());
        let deletion = vec![
            ("x".to_string(), String::new()),
            ("bc".to_string(), "z".to_string()),
        ];
        assert_eq!(lint_pairs(&deletion).len(), 1);
    }

    #[test]
    fn codepoint_formatting_round_trips() {
        let s = "ọ\u{0301}a";
        assert_eq!(parse_codepoints(&format_codepoints(s)).unwrap(), s);
    }
}
