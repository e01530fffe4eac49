//! One NST iteration's data side: correction, filtering, balancing, and the
//! per-iteration statistics report.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::IterationConfig;
use crate::filter::apply_filter;
use crate::llm_correct::{
    correct_batch, BatchOutcome, ChatClient, CorrectionBatch, PromptLang, PromptTemplate,
    RetryPolicy,
};
use crate::manifest::{total_duration_hours, Lang, Manifest, ManifestEntry};
use crate::metrics::{error_rate, MetricMode};
use crate::{Error, Result};

/// Totals for one iteration, mirroring the filtered-data analysis columns:
/// total hours, filtered hours, ratio, and the greedy/filtered error rates
/// against references when references exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration_index: usize,
    /// Hours of utterances whose correction batch succeeded.
    pub total_hours: f64,
    /// Hours kept after filtering, before balancing.
    pub filtered_hours: f64,
    pub filtered_ratio: f64,
    /// Hours lost to dropped batches; excluded from total_hours.
    pub dropped_batch_hours: f64,
    pub greedy_err: Option<f64>,
    pub filtered_err: Option<f64>,
}

/// Everything one iteration produces.
pub struct IterationOutput {
    pub train_manifest: Manifest,
    pub stats: IterationStats,
    pub decisions_manifest: Manifest,
}

/// Runs correction batches with a bounded worker pool, preserving batch
/// order. Each batch's retry sequence stays serial inside its worker.
fn correct_batches(
    client: &dyn ChatClient,
    template: &PromptTemplate,
    batches: &[CorrectionBatch],
    policy: RetryPolicy,
    parallelism: usize,
) -> Result<Vec<BatchOutcome>> {
    let results: Mutex<Vec<Option<Result<BatchOutcome>>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(batches.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= batches.len() {
                    break;
                }
                let outcome = correct_batch(client, template, &batches[idx], policy);
                results.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker filled slot"))
        .collect()
}

fn prompt_lang(lang: Lang) -> Result<PromptLang> {
    match lang {
        Lang::ZH => Ok(PromptLang::ZH),
        Lang::EN => Ok(PromptLang::EN),
        Lang::CS => Err(Error::Config(
            "code-switched entries have no correction prompt; expected ZH or EN".into(),
        )),
    }
}

/// Corpus-level error rate: summed errors over summed reference lengths,
/// restricted to entries that carry a reference.
fn corpus_error(
    entries: &[&ManifestEntry],
    hyp_of: impl Fn(&ManifestEntry) -> Option<&String>,
    mode: MetricMode,
) -> Option<f64> {
    let mut errors = 0usize;
    let mut ref_len = 0usize;
    let mut scored = 0usize;
    for entry in entries {
        let (Some(reference), Some(hypothesis)) = (entry.ref_text.as_ref(), hyp_of(entry)) else {
            continue;
        };
        let rate = error_rate(reference, hypothesis, mode);
        errors += rate.errors;
        ref_len += rate.ref_len;
        scored += 1;
    }
    if scored == 0 {
        return None;
    }
    if ref_len == 0 {
        return Some(if errors == 0 { 0.0 } else { 1.0 });
    }
    Some(errors as f64 / ref_len as f64)
}

/// Drives one iteration: batch correction per language, Hypo-MER filtering,
/// cross-language duration balancing, and stats over the succeeded batches.
pub fn run_iteration(
    hyp_manifests: &HashMap<Lang, Manifest>,
    config: &IterationConfig,
    endpoint: &dyn ChatClient,
) -> Result<IterationOutput> {
    config.validate()?;
    let mode = config.filter.metric_mode;

    let mut kept_by_lang: HashMap<Lang, Vec<ManifestEntry>> = HashMap::new();
    let mut succeeded: Vec<ManifestEntry> = Vec::new();
    let mut kept_all: Vec<ManifestEntry> = Vec::new();
    let mut decisions = Manifest::new(format!("decisions-iter{}", config.iteration_index));
    let mut dropped_batch_hours = 0.0;

    // Languages in a fixed order so output is deterministic regardless of
    // map iteration order.
    let mut langs: Vec<Lang> = hyp_manifests.keys().copied().collect();
    langs.sort_by_key(|l| l.to_string());

    for lang in langs {
        let manifest = &hyp_manifests[&lang];
        if manifest.is_empty() {
            continue;
        }
        manifest.validate()?;
        let template = PromptTemplate::builtin(prompt_lang(lang)?);

        let entry_refs: Vec<&ManifestEntry> = manifest.entries.iter().collect();
        let mut batches = Vec::new();
        for chunk in entry_refs.chunks(config.batch_size) {
            batches.push(CorrectionBatch::from_entries(chunk)?);
        }
        let outcomes =
            correct_batches(endpoint, &template, &batches, config.retry, config.parallelism)?;

        let mut corrected_entries: Vec<ManifestEntry> = Vec::new();
        for (chunk, outcome) in entry_refs.chunks(config.batch_size).zip(outcomes) {
            match outcome {
                BatchOutcome::Corrected(corrections) => {
                    for (entry, corrected) in chunk.iter().zip(corrections) {
                        let mut e = (*entry).clone();
                        e.corrected_text = Some(corrected);
                        corrected_entries.push(e);
                    }
                }
                BatchOutcome::Dropped(dropped) => {
                    dropped_batch_hours += dropped.total_duration_s / 3600.0;
                    for entry in chunk {
                        let mut e = (*entry).clone();
                        e.extra
                            .insert("batch_dropped".into(), serde_json::Value::Bool(true));
                        decisions.entries.push(e);
                    }
                }
            }
        }

        let (kept, dropped, _) = apply_filter(&corrected_entries, &config.filter)?;
        decisions.entries.extend(kept.iter().cloned());
        decisions.entries.extend(dropped.iter().cloned());
        succeeded.extend(corrected_entries);
        kept_all.extend(kept.iter().cloned());
        kept_by_lang.insert(lang, kept);
    }

    let zh_kept = kept_by_lang.remove(&Lang::ZH).unwrap_or_default();
    let en_kept = kept_by_lang.remove(&Lang::EN).unwrap_or_default();
    let (zh_balanced, en_balanced) = crate::filter::balance_durations(zh_kept, en_kept);

    let mut train = Manifest::new(format!("train-iter{}", config.iteration_index));
    for mut entry in zh_balanced.into_iter().chain(en_balanced) {
        entry.ref_text = entry.corrected_text.clone();
        train.entries.push(entry);
    }

    let succeeded_refs: Vec<&ManifestEntry> = succeeded.iter().collect();
    let kept_refs: Vec<&ManifestEntry> = kept_all.iter().collect();
    let total_hours = total_duration_hours(&succeeded);
    let filtered_hours = total_duration_hours(&kept_all);
    let stats = IterationStats {
        iteration_index: config.iteration_index,
        total_hours,
        filtered_hours,
        filtered_ratio: if total_hours > 0.0 {
            filtered_hours / total_hours
        } else {
            0.0
        },
        dropped_batch_hours,
        greedy_err: corpus_error(&succeeded_refs, |e| e.greedy_text.as_ref(), mode),
        filtered_err: corpus_error(&kept_refs, |e| e.corrected_text.as_ref(), mode),
    };

    Ok(IterationOutput {
        train_manifest: train,
        stats,
        decisions_manifest: decisions,
    })
}

const REPORT_COLUMNS: &str =
    "iteration  total_hours  filtered_hours  filtered_ratio  dropped_hours  greedy_err  filtered_err";

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.4}", v),
        None => "-".into(),
    }
}

/// Plain-text table with one row per iteration. Ratios print at 2 decimal
/// places; hours at 2.
pub fn report(stats_list: &[IterationStats]) -> String {
    let mut out = String::new();
    out.push_str(REPORT_COLUMNS);
    out.push('\n');
    for s in stats_list {
        out.push_str(&format!(
            "{:<9}  {:>11.2}  {:>14.2}  {:>14.2}  {:>13.2}  {:>10}  {:>12}\n",
            s.iteration_index,
            s.total_hours,
            s.filtered_hours,
            s.filtered_ratio,
            s.dropped_batch_hours,
            fmt_opt(s.greedy_err),
            fmt_opt(s.filtered_err),
        ));
    }
    out
}

/// Writes `train.manifest`, `decisions.manifest`, `stats.json` and
/// `stats.txt` under `out_dir`.
pub fn write_outputs(output: &IterationOutput, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    crate::manifest::write_manifest(&output.train_manifest, out_dir.join("train.manifest"))?;
    crate::manifest::write_manifest(
        &output.decisions_manifest,
        out_dir.join("decisions.manifest"),
    )?;
    let stats_json = serde_json::to_string_pretty(&output.stats).expect("stats serialize");
    std::fs::write(out_dir.join("stats.json"), stats_json.as_bytes())
        .map_err(|e| Error::io(out_dir.join("stats.json"), e))?;
    std::fs::write(
        out_dir.join("stats.txt"),
        report(std::slice::from_ref(&output.stats)).as_bytes(),
    )
    .map_err(|e| Error::io(out_dir.join("stats.txt"), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_correct::{AlwaysFailing, MockBehavior, MockEndpoint};

    fn manifest(lang: Lang, n: usize) -> Manifest {
        let mut m = Manifest::new(format!("{lang}"));
        for i in 0..n {
            let mut e = ManifestEntry::new(
                format!("{lang}-{i}"),
                format!("{lang}/{i}.wav"),
                3.6,
                lang,
            );
            e.greedy_text = Some(match lang {
                Lang::ZH => "打开 地图".to_string(),
                _ => format!("hello world {i}"),
            });
            m.entries.push(e);
        }
        m
    }

    fn inputs(n_per_lang: usize) -> HashMap<Lang, Manifest> {
        let mut map = HashMap::new();
        map.insert(Lang::ZH, manifest(Lang::ZH, n_per_lang));
        map.insert(Lang::EN, manifest(Lang::EN, n_per_lang));
        map
    }

    #[test]
    fn echo_endpoint_keeps_everything() {
        let endpoint = MockEndpoint::new(MockBehavior::Echo);
        let config = IterationConfig::default();
        let output = run_iteration(&inputs(5), &config, &endpoint).unwrap();
        assert_eq!(output.stats.filtered_ratio, 1.0);
        assert_eq!(output.stats.dropped_batch_hours, 0.0);
        assert_eq!(output.train_manifest.len(), 10);
        for entry in &output.train_manifest.entries {
            assert_eq!(entry.hypo_mer, Some(0.0));
            assert_eq!(entry.ref_text, entry.corrected_text);
        }
    }

    #[test]
    fn total_failure_drops_all_hours() {
        let endpoint = AlwaysFailing::new();
        let config = IterationConfig::default();
        let output = run_iteration(&inputs(5), &config, &endpoint).unwrap();
        assert_eq!(output.stats.total_hours, 0.0);
        assert!(output.train_manifest.is_empty());
        assert!((output.stats.dropped_batch_hours - 10.0 * 3.6 / 3600.0).abs() < 1e-12);
        assert_eq!(output.decisions_manifest.len(), 10);
    }

    /// Echoes EN prompts, refuses ZH prompts.
    struct FailZh(MockEndpoint);

    impl ChatClient for FailZh {
        fn complete(&self, prompt: &str) -> crate::Result<String> {
            if prompt.starts_with("请确认") {
                Err(crate::Error::Transport("zh endpoint down".into()))
            } else {
                self.0.complete(prompt)
            }
        }
    }

    #[test]
    fn hour_conservation() {
        // ZH batches all drop, EN batches all succeed.
        let endpoint = FailZh(MockEndpoint::new(MockBehavior::Echo));
        let config = IterationConfig {
            batch_size: 2,
            ..Default::default()
        };
        let input = inputs(6);
        let input_hours: f64 = input
            .values()
            .map(|m| total_duration_hours(&m.entries))
            .sum();
        let output = run_iteration(&input, &config, &endpoint).unwrap();
        let sum = output.stats.total_hours + output.stats.dropped_batch_hours;
        assert!((sum - input_hours).abs() <= 1e-6 * input_hours);
    }

    #[test]
    fn deterministic_across_runs_and_parallelism() {
        let config_serial = IterationConfig::default();
        let config_parallel = IterationConfig {
            parallelism: 4,
            batch_size: 3,
            ..Default::default()
        };
        let a = run_iteration(&inputs(10), &config_serial, &MockEndpoint::new(MockBehavior::Echo))
            .unwrap();
        let b = run_iteration(&inputs(10), &config_serial, &MockEndpoint::new(MockBehavior::Echo))
            .unwrap();
        assert_eq!(a.train_manifest, b.train_manifest);
        assert_eq!(a.stats, b.stats);
        let c = run_iteration(
            &inputs(10),
            &config_parallel,
            &MockEndpoint::new(MockBehavior::Echo),
        )
        .unwrap();
        // Same kept set regardless of batching/parallelism with this endpoint.
        let ids = |m: &Manifest| {
            let mut v: Vec<String> = m.entries.iter().map(|e| e.utt_id.clone()).collect();
            v.sort();
            v
        };
        assert_eq!(ids(&a.train_manifest), ids(&c.train_manifest));
    }

    #[test]
    fn cs_entries_rejected() {
        let mut map = HashMap::new();
        map.insert(Lang::CS, manifest(Lang::CS, 2));
        let endpoint = MockEndpoint::new(MockBehavior::Echo);
        assert!(run_iteration(&map, &IterationConfig::default(), &endpoint).is_err());
    }

    #[test]
    fn report_matches_reference_row() {
        let stats = IterationStats {
            iteration_index: 1,
            total_hours: 686.93,
            filtered_hours: 266.82,
            filtered_ratio: 266.82 / 686.93,
            dropped_batch_hours: 0.0,
            greedy_err: Some(0.3174),
            filtered_err: Some(0.2137),
        };
        let table = report(&[stats]);
        let row = table.lines().nth(1).unwrap();
        assert!(row.contains("686.93"));
        assert!(row.contains("266.82"));
        assert!(row.contains("0.39"));
    }

    #[test]
    fn report_empty_and_full() {
        let empty = report(&[]);
        assert_eq!(empty.lines().count(), 1);
        let all_kept = IterationStats {
            iteration_index: 1,
            total_hours: 100.0,
            filtered_hours: 100.0,
            filtered_ratio: 1.0,
            dropped_batch_hours: 0.0,
            greedy_err: None,
            filtered_err: None,
        };
        assert!(report(&[all_kept]).contains("1.00"));
    }
}
