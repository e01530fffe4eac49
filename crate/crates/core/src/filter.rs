//! Hypo-MER computation, threshold filtering, and cross-language duration
//! balancing.
//!
//! The discrepancy between a greedy hypothesis and its LLM-corrected version
//! stands in for pseudo-label quality: when the model leaves a hypothesis
//! alone, the hypothesis is probably trustworthy. Kept entries train on the
//! corrected text.

use serde::{Deserialize, Serialize};

use crate::manifest::{total_duration, ManifestEntry};
use crate::metrics::{error_rate, MetricMode};
use crate::{Error, Result};

/// Which side of the greedy/corrected pair acts as the alignment reference.
/// Zero-vs-nonzero decisions are identical either way; magnitudes near the
/// threshold differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HypoReference {
    #[default]
    Corrected,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub threshold: f64,
    pub metric_mode: MetricMode,
    pub reference: HypoReference,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: 0.1,
            metric_mode: MetricMode::Mer,
            reference: HypoReference::Corrected,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::Config(format!(
                "filter threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Per-utterance verdict at a given threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub utt_id: String,
    pub hypo_mer: f64,
    pub kept: bool,
}

/// Discrepancy between the greedy and corrected hypotheses, by default with
/// the corrected text as reference.
pub fn hypo_mer(greedy_text: &str, corrected_text: &str, mode: MetricMode) -> f64 {
    hypo_mer_with_reference(greedy_text, corrected_text, mode, HypoReference::Corrected)
}

pub fn hypo_mer_with_reference(
    greedy_text: &str,
    corrected_text: &str,
    mode: MetricMode,
    reference: HypoReference,
) -> f64 {
    match reference {
        HypoReference::Corrected => error_rate(corrected_text, greedy_text, mode).rate,
        HypoReference::Greedy => error_rate(greedy_text, corrected_text, mode).rate,
    }
}

/// Splits entries into kept/dropped at the configured threshold. Kept entries
/// get `hypo_mer` and `kept` populated; order is preserved within each list;
/// decisions cover every input in input order.
pub fn apply_filter(
    entries: &[ManifestEntry],
    config: &FilterConfig,
) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>, Vec<FilterDecision>)> {
    config.validate()?;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut decisions = Vec::with_capacity(entries.len());
    for entry in entries {
        let greedy = entry.greedy_text.as_ref().ok_or_else(|| Error::MissingField {
            utt_id: entry.utt_id.clone(),
            field: "greedy_text".into(),
        })?;
        let corrected = entry
            .corrected_text
            .as_ref()
            .ok_or_else(|| Error::MissingField {
                utt_id: entry.utt_id.clone(),
                field: "corrected_text".into(),
            })?;
        let mer =
            hypo_mer_with_reference(greedy, corrected, config.metric_mode, config.reference);
        let keep = mer <= config.threshold;
        decisions.push(FilterDecision {
            utt_id: entry.utt_id.clone(),
            hypo_mer: mer,
            kept: keep,
        });
        let mut annotated = entry.clone();
        annotated.hypo_mer = Some(mer);
        annotated.kept = Some(keep);
        if keep {
            kept.push(annotated);
        } else {
            dropped.push(annotated);
        }
    }
    Ok((kept, dropped, decisions))
}

/// Trims the longer side down to the shorter side's total duration, keeping
/// the cleanest labels: entries are taken in ascending hypo_mer (ties broken
/// by utt_id) until the next one would overshoot. The shorter side passes
/// through unchanged.
pub fn balance_durations(
    zh: Vec<ManifestEntry>,
    en: Vec<ManifestEntry>,
) -> (Vec<ManifestEntry>, Vec<ManifestEntry>) {
    let zh_total = total_duration(&zh);
    let en_total = total_duration(&en);
    if zh_total <= en_total {
        let en_out = trim_to(en, zh_total);
        (zh, en_out)
    } else {
        let zh_out = trim_to(zh, en_total);
        (zh_out, en)
    }
}

fn trim_to(entries: Vec<ManifestEntry>, budget_s: f64) -> Vec<ManifestEntry> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let ma = entries[a].hypo_mer.unwrap_or(f64::INFINITY);
        let mb = entries[b].hypo_mer.unwrap_or(f64::INFINITY);
        ma.partial_cmp(&mb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| entries[a].utt_id.cmp(&entries[b].utt_id))
    });
    let mut selected = vec![false; entries.len()];
    let mut acc = 0.0;
    for idx in order {
        let dur = entries[idx].duration_s;
        if acc + dur > budget_s {
            break;
        }
        acc += dur;
        selected[idx] = true;
    }
    entries
        .into_iter()
        .zip(selected)
        .filter_map(|(e, keep)| keep.then_some(e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Lang;
    use proptest::prelude::*;

    fn entry(id: &str, dur: f64, greedy: &str, corrected: &str) -> ManifestEntry {
        let mut e = ManifestEntry::new(id, format!("{id}.wav"), dur, Lang::EN);
        e.greedy_text = Some(greedy.into());
        e.corrected_text = Some(corrected.into());
        e
    }

    fn kept_entry(id: &str, dur: f64, mer: f64) -> ManifestEntry {
        let mut e = entry(id, dur, "x", "x");
        e.hypo_mer = Some(mer);
        e.kept = Some(true);
        e
    }

    #[test]
    fn hypo_mer_paper_substitution() {
        let mer = hypo_mer("nice to meat you", "nice to meet you", MetricMode::Wer);
        assert_eq!(mer, 0.25);
    }

    #[test]
    fn hypo_mer_identity() {
        assert_eq!(hypo_mer("same text", "same text", MetricMode::Mer), 0.0);
    }

    #[test]
    fn hypo_mer_empty_greedy() {
        assert_eq!(hypo_mer("", "你好", MetricMode::Mer), 1.0);
    }

    #[test]
    fn filter_keeps_below_threshold() {
        let entries = vec![
            entry("keep", 1.0, "a b c", "a b c"),
            entry("drop", 1.0, "a b c d", "a b c x"),
        ];
        let (kept, dropped, decisions) =
            apply_filter(&entries, &FilterConfig::default()).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].utt_id, "keep");
        assert_eq!(kept[0].hypo_mer, Some(0.0));
        assert_eq!(kept[0].kept, Some(true));
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].hypo_mer, Some(0.25));
        assert_eq!(decisions.len(), 2);
    }

    #[test]
    fn threshold_zero_keeps_only_exact_matches() {
        let entries = vec![
            entry("a", 1.0, "Hello, WORLD", "hello world"),
            entry("b", 1.0, "hello word", "hello world"),
        ];
        let config = FilterConfig {
            threshold: 0.0,
            ..Default::default()
        };
        let (kept, _, _) = apply_filter(&entries, &config).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].utt_id, "a");
    }

    #[test]
    fn missing_text_names_utt() {
        let mut e = entry("u9", 1.0, "a", "a");
        e.corrected_text = None;
        match apply_filter(&[e], &FilterConfig::default()).unwrap_err() {
            Error::MissingField { utt_id, field } => {
                assert_eq!(utt_id, "u9");
                assert_eq!(field, "corrected_text");
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn balance_already_equal() {
        let zh = vec![kept_entry("z1", 100.0, 0.0)];
        let en = vec![kept_entry("e1", 100.0, 0.0)];
        let (zh_out, en_out) = balance_durations(zh.clone(), en.clone());
        assert_eq!(zh_out, zh);
        assert_eq!(en_out, en);
    }

    #[test]
    fn balance_zero_side_empties_both() {
        let zh = vec![kept_entry("z1", 36000.0, 0.0)];
        let (zh_out, en_out) = balance_durations(zh, vec![]);
        assert!(zh_out.is_empty());
        assert!(en_out.is_empty());
    }

    #[test]
    fn balance_greedy_fill_by_ascending_mer() {
        let zh = vec![
            kept_entry("z1", 3.0, 0.02),
            kept_entry("z2", 3.0, 0.08),
            kept_entry("z3", 3.0, 0.10),
        ];
        let en = vec![kept_entry("e1", 6.0, 0.0)];
        let (zh_out, en_out) = balance_durations(zh, en);
        let ids: Vec<&str> = zh_out.iter().map(|e| e.utt_id.as_str()).collect();
        assert_eq!(ids, vec!["z1", "z2"]);
        assert_eq!(en_out.len(), 1);
    }

    proptest! {
        #[test]
        fn monotone_in_threshold(
            rates in proptest::collection::vec(0.0f64..0.5, 1..30),
            t1 in 0.0f64..0.3,
            dt in 0.0f64..0.3,
        ) {
            // Build entries whose hypo_mer is approximately rates[i] by using
            // synthetic token errors out of 10 reference words.
            let entries: Vec<ManifestEntry> = rates.iter().enumerate().map(|(i, r)| {
                let n_err = (r * 10.0).round() as usize;
                let reference: Vec<String> = (0..10).map(|k| format!("w{k}")).collect();
                let mut hyp = reference.clone();
                for item in hyp.iter_mut().take(n_err) {
                    *item = "xx".to_string();
                }
                entry(&format!("u{i}"), 1.0, &hyp.join(" "), &reference.join(" "))
            }).collect();
            let t2 = t1 + dt;
            let keep_ids = |t: f64| -> Vec<String> {
                let config = FilterConfig { threshold: t, ..Default::default() };
                let (kept, _, _) = apply_filter(&entries, &config).unwrap();
                kept.into_iter().map(|e| e.utt_id).collect()
            };
            let k1 = keep_ids(t1);
            let k2 = keep_ids(t2);
            prop_assert!(k1.iter().all(|id| k2.contains(id)));
        }

        #[test]
        fn kept_dropped_partition(
            seeds in proptest::collection::vec(0u8..4, 1..20),
        ) {
            let entries: Vec<ManifestEntry> = seeds.iter().enumerate().map(|(i, s)| {
                let corrected = "a b c d";
                let greedy = match s {
                    0 => "a b c d",
                    1 => "a b c x",
                    2 => "a x y d",
                    _ => "q r s t",
                };
                entry(&format!("u{i}"), 1.0, greedy, corrected)
            }).collect();
            let (kept, dropped, decisions) =
                apply_filter(&entries, &FilterConfig::default()).unwrap();
            prop_assert_eq!(kept.len() + dropped.len(), entries.len());
            prop_assert_eq!(decisions.len(), entries.len());
            let mut ids: Vec<&str> = kept.iter().chain(&dropped).map(|e| e.utt_id.as_str()).collect();
            ids.sort();
            let mut want: Vec<String> = entries.iter().map(|e| e.utt_id.clone()).collect();
            want.sort();
            prop_assert_eq!(ids, want.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            // hypo_mer == 0 iff normalized texts agree
            for (e, d) in entries.iter().zip(&decisions) {
                let same = crate::textnorm::normalize(e.greedy_text.as_ref().unwrap())
                    == crate::textnorm::normalize(e.corrected_text.as_ref().unwrap());
                prop_assert_eq!(d.hypo_mer == 0.0, same);
            }
        }

        #[test]
        fn balance_never_increases_and_bounded(
            zh_durs in proptest::collection::vec(0.5f64..10.0, 0..20),
            en_durs in proptest::collection::vec(0.5f64..10.0, 0..20),
        ) {
            let zh: Vec<ManifestEntry> = zh_durs.iter().enumerate()
                .map(|(i, d)| kept_entry(&format!("z{i}"), *d, (i as f64) * 0.01)).collect();
            let en: Vec<ManifestEntry> = en_durs.iter().enumerate()
                .map(|(i, d)| kept_entry(&format!("e{i}"), *d, (i as f64) * 0.01)).collect();
            let zh_total = total_duration(&zh);
            let en_total = total_duration(&en);
            let (zh_out, en_out) = balance_durations(zh.clone(), en.clone());
            prop_assert!(total_duration(&zh_out) <= zh_total + 1e-9);
            prop_assert!(total_duration(&en_out) <= en_total + 1e-9);
            // subsets
            prop_assert!(zh_out.iter().all(|e| zh.contains(e)));
            prop_assert!(en_out.iter().all(|e| en.contains(e)));
            // imbalance bound: max entry duration on the trimmed side
            let (trimmed, _other_total) = if zh_total <= en_total { (&en, zh_total) } else { (&zh, en_total) };
            let max_dur = trimmed.iter().map(|e| e.duration_s).fold(0.0, f64::max);
            let gap = (total_duration(&zh_out) - total_duration(&en_out)).abs();
            prop_assert!(gap <= max_dur + 1e-9, "gap {} > max_dur {}", gap, max_dur);
            // determinism
            let again = balance_durations(zh, en);
            prop_assert_eq!((zh_out, en_out), again);
        }
    }
}
