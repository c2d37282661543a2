//! Code tokenization: a hand-written lexer for Python-syntax snippets that
//! keeps identifiers and comment words.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const PYTHON_KEYWORDS: &str = include_str!("../../data/python_keywords.txt");

fn python_keywords() -> &'static HashSet<&'static str> {
    static KW: OnceLock<HashSet<&'static str>> = OnceLock::new();
    KW.get_or_init(|| {
        PYTHON_KEYWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Tokens recovered from a code snippet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeTokens {
    /// Identifier subtokens after camel-case/underscore splitting, lowercased.
    pub identifiers: Vec<String>,
    /// Lowercased words from inline comments.
    pub comments: Vec<String>,
    /// Identifiers as they appeared in the source.
    pub raw_identifiers: Vec<String>,
    /// Number of regions the lexer could not make sense of and skipped.
    pub skipped_regions: usize,
}

impl CodeTokens {
    pub fn is_empty(&self) -> bool {
        self.identifiers.is_empty() && self.comments.is_empty()
    }

    /// Identifier subtokens followed by comment words.
    pub fn tokens(&self) -> Vec<String> {
        self.identifiers.iter().chain(&self.comments).cloned().collect()
    }
}

/// Plug-in point for alternative code tokenizers (e.g. a full parser).
pub trait CodeTokenizer: Send + Sync {
    fn tokenize(&self, code: &str) -> CodeTokens;
}

/// The default lexer for Python-syntax code.
#[derive(Debug, Clone, Copy, Default)]
pub struct PythonLexer;

impl CodeTokenizer for PythonLexer {
    fn tokenize(&self, code: &str) -> CodeTokens {
        tokenize_code(code)
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

const OPERATOR_CHARS: &str = "+-*/%@&|^~<>=!.,:;()[]{}\\";

/// Splits an identifier on underscores and camel-case boundaries and
/// lowercases the parts. `HTTPServer` gives `http`, `server`; digits stay
/// attached to the preceding part.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for piece in ident.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = piece.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (cur.is_uppercase() && (prev.is_lowercase() || prev.is_numeric()))
                || (cur.is_uppercase() && prev.is_uppercase() && next_lower);
            if boundary {
                parts.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        parts.push(chars[start..].iter().collect::<String>());
    }
    parts.into_iter().map(|p| p.to_lowercase()).filter(|p| !p.is_empty()).collect()
}

fn comment_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Returns the byte length of a string literal starting at `start` (at the
/// opening quote), or `None` if it is unterminated.
fn string_literal_len(src: &str, start: usize) -> Option<usize> {
    let rest = &src[start..];
    let quote = rest.chars().next()?;
    let triple: String = std::iter::repeat_n(quote, 3).collect();
    if rest.starts_with(&triple) {
        let body = &rest[3..];
        let mut i = 0;
        let bytes = body.as_bytes();
        while i < bytes.len() {
            if bytes[i] == b'\\' {
                i += 2;
                continue;
            }
            if bytes[i..].starts_with(triple.as_bytes()) {
                return Some(3 + i + 3);
            }
            i += 1;
        }
        return None;
    }
    let bytes = rest.as_bytes();
    let q = quote as u8;
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return None,
            b if b == q => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}

fn is_string_prefix(ident: &str) -> bool {
    ident.len() <= 2
        && ident
            .chars()
            .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
}

/// Lexes a Python snippet, keeping identifier subtokens and comment words;
/// literals, operators and keywords are dropped. Characters outside the
/// Python token alphabet and unterminated strings are skipped and counted.
pub fn tokenize_code(code: &str) -> CodeTokens {
    let keywords = python_keywords();
    let mut out = CodeTokens::default();
    let mut pos = 0;
    let mut in_skip = false;
    while pos < code.len() {
        let c = code[pos..].chars().next().expect("pos on char boundary");
        if c.is_whitespace() {
            in_skip = false;
            pos += c.len_utf8();
            continue;
        }
        if c == '#' {
            in_skip = false;
            let end = code[pos..].find('\n').map_or(code.len(), |e| pos + e);
            out.comments.extend(comment_words(&code[pos + 1..end]));
            pos = end;
            continue;
        }
        if c == '"' || c == '\'' {
            in_skip = false;
            match string_literal_len(code, pos) {
                Some(len) => pos = (pos + len).min(code.len()),
                None => {
                    out.skipped_regions += 1;
                    pos = code[pos..].find('\n').map_or(code.len(), |e| pos + e);
                }
            }
            continue;
        }
        if is_ident_start(c) {
            in_skip = false;
            let end = code[pos..]
                .char_indices()
                .find(|&(_, ch)| !is_ident_continue(ch))
                .map_or(code.len(), |(i, _)| pos + i);
            let ident = &code[pos..end];
            // String prefixes such as r"..." or f'...'.
            if is_string_prefix(ident) && code[end..].starts_with(['"', '\'']) {
                pos = end;
                continue;
            }
            if !keywords.contains(ident) {
                out.raw_identifiers.push(ident.to_string());
                out.identifiers.extend(split_identifier(ident));
            }
            pos = end;
            continue;
        }
        if c.is_ascii_digit() {
            in_skip = false;
            // Numeric literal, including hex/float/exponent/imaginary forms.
            let end = code[pos..]
                .char_indices()
                .find(|&(i, ch)| {
                    !(ch.is_ascii_alphanumeric()
                        || ch == '_'
                        || ch == '.'
                        || ((ch == '+' || ch == '-')
                            && i > 0
                            && matches!(code[pos..].as_bytes()[i - 1], b'e' | b'E')))
                })
                .map_or(code.len(), |(i, _)| pos + i);
            pos = end;
            continue;
        }
        if OPERATOR_CHARS.contains(c) {
            in_skip = false;
            pos += c.len_utf8();
            continue;
        }
        if !in_skip {
            out.skipped_regions += 1;
            in_skip = true;
        }
        pos += c.len_utf8();
    }
    out
}
