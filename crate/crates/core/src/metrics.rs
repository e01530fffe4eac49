//! Levenshtein alignment and CER/WER/MER computation.

use serde::{Deserialize, Serialize};

use crate::textnorm::{tokenize_chars, tokenize_mixed, tokenize_words};
use crate::{Error, Result};

/// Which unit stream an error rate is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricMode {
    /// Characters of all scripts.
    Cer,
    /// Whitespace-delimited words.
    Wer,
    /// Mixed units: Han characters and Latin words.
    #[default]
    Mer,
}

impl MetricMode {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            MetricMode::Cer => tokenize_chars(text),
            MetricMode::Wer => tokenize_words(text),
            MetricMode::Mer => tokenize_mixed(text)
                .tokens
                .into_iter()
                .map(|t| t.surface)
                .collect(),
        }
    }
}

impl std::str::FromStr for MetricMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CER" => Ok(MetricMode::Cer),
            "WER" => Ok(MetricMode::Wer),
            "MER" => Ok(MetricMode::Mer),
            other => Err(Error::Config(format!("unknown metric mode: {other}"))),
        }
    }
}

impl std::fmt::Display for MetricMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MetricMode::Cer => "CER",
            MetricMode::Wer => "WER",
            MetricMode::Mer => "MER",
        };
        f.write_str(s)
    }
}

/// Hit/substitution/deletion/insertion counts from a minimal-cost alignment.
///
/// Invariants: `hits + subs + dels` equals the reference length,
/// `hits + subs + ins` equals the hypothesis length, and `subs + dels + ins`
/// is the unit-cost edit distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub hits: usize,
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.subs + self.dels + self.ins
    }
}

/// An error rate with its raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRate {
    pub errors: usize,
    pub ref_len: usize,
    pub rate: f64,
}

/// Aggregate comparison of greedy vs LLM-corrected hypotheses against
/// references. All fractions share the same denominator `n_utts`; the
/// "not worse" and "more accurate" columns therefore count every scored
/// utterance, including ones where the greedy output was already exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionQualityReport {
    pub n_utts: usize,
    pub frac_greedy_exact: f64,
    pub frac_llm_exact: f64,
    pub frac_not_worse: f64,
    pub frac_more_accurate: f64,
}

/// One step of an alignment path, in reference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    /// Reference and hypothesis tokens match.
    Hit,
    /// Hypothesis token replaces a reference token.
    Sub,
    /// Reference token absent from the hypothesis.
    Del,
    /// Extra hypothesis token.
    Ins,
}

/// Minimal unit-cost Levenshtein alignment between two token sequences.
///
/// Backtrace tie-break when costs are equal: substitution over deletion over
/// insertion, so counts are deterministic.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let mut counts = Alignment::default();
    for op in align_ops(reference, hypothesis) {
        match op {
            EditOp::Hit => counts.hits += 1,
            EditOp::Sub => counts.subs += 1,
            EditOp::Del => counts.dels += 1,
            EditOp::Ins => counts.ins += 1,
        }
    }
    counts
}

/// The full alignment path behind [`align`], front to back.
pub fn align_ops<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    let m = reference.len();
    let n = hypothesis.len();
    let mut dist = vec![vec![0usize; n + 1]; m + 1];
    for i in 0..=m {
        dist[i][0] = i;
    }
    for j in 0..=n {
        dist[0][j] = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub_cost = if reference[i - 1] == hypothesis[j - 1] {
                0
            } else {
                1
            };
            dist[i][j] = (dist[i - 1][j - 1] + sub_cost)
                .min(dist[i - 1][j] + 1)
                .min(dist[i][j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let sub_cost = if reference[i - 1] == hypothesis[j - 1] {
                0
            } else {
                1
            };
            if dist[i][j] == dist[i - 1][j - 1] + sub_cost {
                ops.push(if sub_cost == 0 { EditOp::Hit } else { EditOp::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[i][j] == dist[i - 1][j] + 1 {
            ops.push(EditOp::Del);
            i -= 1;
        } else {
            ops.push(EditOp::Ins);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Scores a hypothesis against a reference in the given mode. Both texts are
/// normalized and tokenized first.
///
/// Empty-reference convention: both empty gives rate 0; empty reference with
/// a non-empty hypothesis gives rate 1.0 with every hypothesis token counted
/// as an insertion. Rates are never clipped and may exceed 1.0.
pub fn error_rate(ref_text: &str, hyp_text: &str, mode: MetricMode) -> ErrorRate {
    let ref_tokens = mode.tokenize(ref_text);
    let hyp_tokens = mode.tokenize(hyp_text);
    let alignment = align(&ref_tokens, &hyp_tokens);
    let errors = alignment.errors();
    let ref_len = ref_tokens.len();
    let rate = if ref_len > 0 {
        errors as f64 / ref_len as f64
    } else if hyp_tokens.is_empty() {
        0.0
    } else {
        1.0
    };
    ErrorRate {
        errors,
        ref_len,
        rate,
    }
}

/// One scored utterance for [`correction_quality`].
pub struct ScoredTexts<'a> {
    pub utt_id: &'a str,
    pub ref_text: &'a str,
    pub greedy_text: &'a str,
    pub corrected_text: &'a str,
}

/// Computes the correction-quality fractions over a non-empty utterance set.
pub fn correction_quality(
    entries: &[ScoredTexts<'_>],
    mode: MetricMode,
) -> Result<CorrectionQualityReport> {
    if entries.is_empty() {
        return Err(Error::EmptyReport);
    }
    let n = entries.len();
    let mut greedy_exact = 0usize;
    let mut llm_exact = 0usize;
    let mut not_worse = 0usize;
    let mut more_accurate = 0usize;
    for entry in entries {
        let greedy = error_rate(entry.ref_text, entry.greedy_text, mode);
        let corrected = error_rate(entry.ref_text, entry.corrected_text, mode);
        if greedy.rate == 0.0 {
            greedy_exact += 1;
        }
        if corrected.rate == 0.0 {
            llm_exact += 1;
        }
        if corrected.rate <= greedy.rate {
            not_worse += 1;
        }
        if corrected.rate < greedy.rate {
            more_accurate += 1;
        }
    }
    Ok(CorrectionQualityReport {
        n_utts: n,
        frac_greedy_exact: greedy_exact as f64 / n as f64,
        frac_llm_exact: llm_exact as f64 / n as f64,
        frac_not_worse: not_worse as f64 / n as f64,
        frac_more_accurate: more_accurate as f64 / n as f64,
    })
}

impl CorrectionQualityReport {
    /// Aligned plain-text rendering mirroring the machine-readable fields.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str("# fractions computed over all scored utterances\n");
        out.push_str(&format!(
            "{:<20} {:>10}\n",
            "n_utts", self.n_utts
        ));
        for (label, value) in [
            ("greedy_exact", self.frac_greedy_exact),
            ("llm_exact", self.frac_llm_exact),
            ("not_worse", self.frac_not_worse),
            ("more_accurate", self.frac_more_accurate),
        ] {
            out.push_str(&format!("{label:<20} {value:>10.4}\n"));
        }
        out
    }
}
