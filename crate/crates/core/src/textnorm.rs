//! Text normalization and mixed-script tokenization.
//!
//! Error rates over code-switched Mandarin-English text need a unit stream
//! where each Han character is one token and each Latin word is one token.
//! Everything here is pure and allocation-light; scoring normalizes on the
//! fly so raw transcripts are never mutated in place.

use unicode_normalization::UnicodeNormalization;

/// Characters stripped before scoring. Covers ASCII punctuation plus the
/// full-width marks common in Mandarin transcripts.
const PUNCTUATION: &[char] = &[
    '.', ',', '?', '!', ';', ':', '"', '\'', '(', ')', '[', ']', '<', '>', '#', '。', '，', '？',
    '！', '、', '；', '：',
];

/// Script class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Script {
    Han,
    Latin,
}

/// One scoring unit: a single Han character or a maximal non-Han word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub script: Script,
}

/// Ordered token stream produced by [`tokenize_mixed`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    /// Rebuilds the normalized text: single spaces between consecutive Latin
    /// tokens, nothing around Han tokens.
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        let mut prev_latin = false;
        for tok in &self.tokens {
            let latin = tok.script == Script::Latin;
            if latin && prev_latin {
                out.push(' ');
            }
            out.push_str(&tok.surface);
            prev_latin = latin;
        }
        out
    }
}

/// CJK Unified Ideographs plus Extension A. Kana, Hangul, digits and accented
/// Latin all fall into the Latin (word) class.
pub fn is_han(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}')
}

/// Normalizes text for scoring: NFKC, lower-case, punctuation to spaces,
/// whitespace runs collapsed, trimmed. Idempotent.
pub fn normalize(text: &str) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.nfkc() {
        if PUNCTUATION.contains(&c) {
            cleaned.push(' ');
        } else if c.is_whitespace() {
            cleaned.push(' ');
        } else {
            for lc in c.to_lowercase() {
                cleaned.push(lc);
            }
        }
    }
    let mut out = String::with_capacity(cleaned.len());
    let mut pending_space = false;
    for c in cleaned.chars() {
        if c == ' ' {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Splits normalized text into mixed units: one token per Han character, one
/// token per maximal run of non-Han non-space characters. Un-normalized input
/// is normalized first.
pub fn tokenize_mixed(text: &str) -> TokenSequence {
    let normalized = normalize(text);
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in normalized.chars() {
        if c == ' ' {
            flush_word(&mut word, &mut tokens);
        } else if is_han(c) {
            flush_word(&mut word, &mut tokens);
            tokens.push(Token {
                surface: c.to_string(),
                script: Script::Han,
            });
        } else {
            word.push(c);
        }
    }
    flush_word(&mut word, &mut tokens);
    TokenSequence { tokens }
}

fn flush_word(word: &mut String, tokens: &mut Vec<Token>) {
    if !word.is_empty() {
        tokens.push(Token {
            surface: std::mem::take(word),
            script: Script::Latin,
        });
    }
}

/// Character-level tokenization (all scripts), used for CER.
pub fn tokenize_chars(text: &str) -> Vec<String> {
    normalize(text)
        .chars()
        .filter(|c| *c != ' ')
        .map(|c| c.to_string())
        .collect()
}

/// Whitespace word tokenization, used for WER.
pub fn tokenize_words(text: &str) -> Vec<String> {
    normalize(text)
        .split_whitespace()
        .map(|w| w.to_string())
        .collect()
}
