//! Desk-scale verification harness: synthetic bilingual corpora, a seeded
//! ASR-error corruptor, and an oracle corrector standing in for the LLM, so
//! the full pipeline's filtering dynamics are testable offline.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{FileConfig, IterationConfig};
use crate::llm_correct::ChatClient;
use crate::manifest::{Lang, Manifest, ManifestEntry};
use crate::metrics::{align_ops, error_rate, EditOp, MetricMode};
use crate::orchestrator::{run_iteration, IterationOutput, IterationStats};
use crate::textnorm::tokenize_mixed;
use crate::{Error, Result};

/// One PRNG stream per (seed, label) pair. Hash-based splitting keeps every
/// utterance reproducible independent of processing order or parallelism.
fn split_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Synthetic token inventory for one language.
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    pub fn new(lang: Lang, vocab_size: usize) -> Self {
        let tokens = match lang {
            // 0x4E00..=0x9FFF gives 20992 distinct Han characters.
            Lang::ZH | Lang::CS => (0..vocab_size)
                .map(|i| {
                    let c = char::from_u32(0x4E00 + (i as u32 % 0x5200)).expect("in Han range");
                    c.to_string()
                })
                .collect(),
            Lang::EN => (0..vocab_size).map(pseudo_word).collect(),
        };
        Vocab { tokens }
    }

    fn sample(&self, rng: &mut impl Rng) -> &str {
        &self.tokens[rng.gen_range(0..self.tokens.len())]
    }

    fn sample_other(&self, rng: &mut impl Rng, not: &str) -> &str {
        // Vocab has at least 2 tokens, so this terminates.
        loop {
            let idx = rng.gen_range(0..self.tokens.len());
            if self.tokens[idx] != not {
                return &self.tokens[idx];
            }
        }
    }
}

fn pseudo_word(mut idx: usize) -> String {
    const CONSONANTS: &[u8] = b"bdfgklmnprst";
    const VOWELS: &[u8] = b"aeiou";
    let mut word = String::new();
    loop {
        word.push(CONSONANTS[idx % CONSONANTS.len()] as char);
        idx /= CONSONANTS.len();
        word.push(VOWELS[idx % VOWELS.len()] as char);
        idx /= VOWELS.len();
        if idx == 0 {
            break;
        }
    }
    word
}

/// Per-token corruption probabilities for the synthetic greedy decoder.
#[derive(Debug, Clone, Copy)]
pub struct AsrErrorModel {
    pub sub_p: f64,
    pub del_p: f64,
    pub ins_p: f64,
    pub rng_seed: u64,
}

impl AsrErrorModel {
    /// Splits a target total token error rate into 60% substitutions, 20%
    /// deletions, 20% insertions.
    pub fn from_total_rate(rate: f64, rng_seed: u64) -> Self {
        AsrErrorModel {
            sub_p: 0.6 * rate,
            del_p: 0.2 * rate,
            ins_p: 0.2 * rate,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.sub_p, self.del_p, self.ins_p];
        if ps.iter().any(|p| !(0.0..1.0).contains(p)) || ps.iter().sum::<f64>() >= 1.0 {
            return Err(Error::Config(
                "error-model probabilities must each be in [0,1) and sum below 1".into(),
            ));
        }
        Ok(())
    }
}

/// Stand-in for the LLM: reverts alignment errors with probability `fix_p`,
/// optionally scaled down as the greedy error rate grows.
#[derive(Debug, Clone, Copy)]
pub struct OracleCorrector {
    pub fix_p: f64,
    /// fix_p_effective = fix_p * max(0, 1 - decay_k * greedy_rate).
    pub decay_k: f64,
    pub rng_seed: u64,
}

/// Generates a synthetic reference corpus. Ids are "sim-{lang}-{i}".
pub fn gen_corpus(
    n_utts: usize,
    lang: Lang,
    mean_len: usize,
    vocab_size: usize,
    mean_dur_s: f64,
    seed: u64,
) -> Result<Manifest> {
    if n_utts < 1 {
        return Err(Error::Config("n_utts must be >= 1".into()));
    }
    if vocab_size < 2 {
        return Err(Error::Config("vocab_size must be >= 2".into()));
    }
    let vocab = Vocab::new(lang, vocab_size);
    let mut manifest = Manifest::new(format!("sim-{lang}"));
    let len_dist = Uniform::new_inclusive(1, 2 * mean_len.max(1) - 1);
    let dur_dist = Uniform::new(0.5 * mean_dur_s, 1.5 * mean_dur_s);
    for i in 0..n_utts {
        let utt_id = format!("sim-{lang}-{i}");
        let mut rng = split_rng(seed, &format!("gen:{utt_id}"));
        let len = len_dist.sample(&mut rng);
        let words: Vec<&str> = (0..len).map(|_| vocab.sample(&mut rng)).collect();
        let text = match lang {
            Lang::ZH => words.concat(),
            _ => words.join(" "),
        };
        let mut entry = ManifestEntry::new(&utt_id, format!("sim://{utt_id}"), dur_dist.sample(&mut rng), lang);
        entry.ref_text = Some(text);
        entry.source = Some("sim".into());
        manifest.entries.push(entry);
    }
    Ok(manifest)
}

/// Applies per-token substitution/deletion/insertion noise to a reference
/// transcript. Deterministic in (model seed, utt_id).
pub fn corrupt(ref_text: &str, model: &AsrErrorModel, vocab: &Vocab, utt_id: &str) -> String {
    let mut rng = split_rng(model.rng_seed, &format!("corrupt:{utt_id}"));
    let tokens = tokenize_mixed(ref_text);
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    for token in &tokens.tokens {
        let roll: f64 = rng.gen();
        if roll < model.sub_p {
            out.push(vocab.sample_other(&mut rng, &token.surface).to_string());
        } else if roll < model.sub_p + model.del_p {
            // deleted
        } else {
            out.push(token.surface.clone());
        }
        if rng.gen::<f64>() < model.ins_p {
            out.push(vocab.sample(&mut rng).to_string());
        }
    }
    out.join(" ")
}

/// Reverts each alignment error with probability `fix_p` (after decay).
/// Never increases the edit distance to the reference.
pub fn oracle_correct(
    greedy_text: &str,
    ref_text: &str,
    oracle: &OracleCorrector,
    utt_id: &str,
) -> String {
    let mut rng = split_rng(oracle.rng_seed, &format!("oracle:{utt_id}"));
    let ref_tokens: Vec<String> = MetricMode::Mer.tokenize(ref_text);
    let greedy_tokens: Vec<String> = MetricMode::Mer.tokenize(greedy_text);
    let greedy_rate = error_rate(ref_text, greedy_text, MetricMode::Mer).rate;
    let fix_p = oracle.fix_p * (1.0 - oracle.decay_k * greedy_rate).max(0.0);

    let ops = align_ops(&ref_tokens, &greedy_tokens);
    let mut out: Vec<String> = Vec::with_capacity(greedy_tokens.len());
    let (mut ri, mut hi) = (0usize, 0usize);
    for op in ops {
        match op {
            EditOp::Hit => {
                out.push(greedy_tokens[hi].clone());
                ri += 1;
                hi += 1;
            }
            EditOp::Sub => {
                let fixed = rng.gen::<f64>() < fix_p;
                out.push(if fixed {
                    ref_tokens[ri].clone()
                } else {
                    greedy_tokens[hi].clone()
                });
                ri += 1;
                hi += 1;
            }
            EditOp::Del => {
                if rng.gen::<f64>() < fix_p {
                    out.push(ref_tokens[ri].clone());
                }
                ri += 1;
            }
            EditOp::Ins => {
                if rng.gen::<f64>() >= fix_p {
                    out.push(greedy_tokens[hi].clone());
                }
                hi += 1;
            }
        }
    }
    out.join(" ")
}

/// Chat endpoint backed by precomputed oracle corrections, keyed by the
/// (sanitized) greedy text appearing in the payload.
pub struct OracleEndpoint {
    corrections: HashMap<String, String>,
    calls: Mutex<usize>,
}

impl OracleEndpoint {
    pub fn new(corrections: HashMap<String, String>) -> Self {
        OracleEndpoint {
            corrections,
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl ChatClient for OracleEndpoint {
    fn complete(&self, prompt: &str) -> Result<String> {
        *self.calls.lock().unwrap() += 1;
        let payload = prompt.lines().last().unwrap_or("");
        let mut groups = Vec::new();
        for item in payload.split('#').filter(|s| !s.is_empty()) {
            let corrected = self
                .corrections
                .get(item)
                .cloned()
                .unwrap_or_else(|| item.to_string());
            groups.push(format!("<{corrected}>"));
        }
        Ok(groups.join("#"))
    }
}

/// Full scenario for [`run_simulation`].
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub n_utts: usize,
    pub mean_len: usize,
    pub vocab_size: usize,
    pub mean_dur_s: f64,
    /// Per-iteration total token error rates; length = iteration count.
    pub error_rates: Vec<f64>,
    pub fix_p: f64,
    pub decay_k: f64,
    pub config: IterationConfig,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            n_utts: 10_000,
            mean_len: 10,
            vocab_size: 200,
            mean_dur_s: 3.6,
            error_rates: vec![0.30, 0.20, 0.15],
            fix_p: 0.6,
            decay_k: 0.0,
            config: IterationConfig::default(),
        }
    }
}

impl SimScenario {
    /// Reads a scenario from a config file's `[sim]` section, falling back to
    /// defaults for missing keys.
    pub fn from_file_config(file: &FileConfig) -> Result<SimScenario> {
        let mut scenario = SimScenario {
            config: file.resolve()?,
            ..Default::default()
        };
        if let Some(sim) = &file.sim {
            if let Some(n) = sim.n_utts {
                scenario.n_utts = n;
            }
            if let Some(len) = sim.mean_len {
                scenario.mean_len = len;
            }
            if let Some(v) = sim.vocab_size {
                scenario.vocab_size = v;
            }
            if let Some(d) = sim.mean_dur_s {
                scenario.mean_dur_s = d;
            }
            if let Some(rates) = &sim.error_rates {
                scenario.error_rates = rates.clone();
            }
            if let Some(p) = sim.fix_p {
                scenario.fix_p = p;
            }
            if let Some(k) = sim.decay_k {
                scenario.decay_k = k;
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.error_rates.is_empty() {
            return Err(Error::Config("scenario needs at least one iteration".into()));
        }
        if !(0.0..=1.0).contains(&self.fix_p) {
            return Err(Error::Config("fix_p must be in [0,1]".into()));
        }
        for rate in &self.error_rates {
            AsrErrorModel::from_total_rate(*rate, 0).validate()?;
        }
        Ok(())
    }
}

/// Runs one pipeline iteration per configured error rate, each driven by the
/// oracle-backed endpoint, and returns the per-iteration outputs.
pub fn run_simulation(scenario: &SimScenario) -> Result<Vec<IterationOutput>> {
    scenario.validate()?;
    let seed = scenario.config.rng_seed;
    let mut outputs = Vec::new();

    let zh_ref = gen_corpus(
        scenario.n_utts,
        Lang::ZH,
        scenario.mean_len,
        scenario.vocab_size,
        scenario.mean_dur_s,
        seed,
    )?;
    let en_ref = gen_corpus(
        scenario.n_utts,
        Lang::EN,
        scenario.mean_len,
        scenario.vocab_size,
        scenario.mean_dur_s,
        seed,
    )?;
    let zh_vocab = Vocab::new(Lang::ZH, scenario.vocab_size);
    let en_vocab = Vocab::new(Lang::EN, scenario.vocab_size);

    for (iter_idx, rate) in scenario.error_rates.iter().enumerate() {
        let iteration = iter_idx + 1;
        let model = AsrErrorModel::from_total_rate(*rate, seed.wrapping_add(iteration as u64));
        let oracle = OracleCorrector {
            fix_p: scenario.fix_p,
            decay_k: scenario.decay_k,
            rng_seed: seed.wrapping_add(1000 + iteration as u64),
        };

        let mut corrections = HashMap::new();
        let mut hyp_manifests = HashMap::new();
        for (lang, reference, vocab) in [
            (Lang::ZH, &zh_ref, &zh_vocab),
            (Lang::EN, &en_ref, &en_vocab),
        ] {
            let mut manifest = Manifest::new(format!("hyp-{lang}-iter{iteration}"));
            for entry in &reference.entries {
                let ref_text = entry.ref_text.as_ref().expect("sim entries carry refs");
                let greedy = corrupt(ref_text, &model, vocab, &entry.utt_id);
                let corrected = oracle_correct(&greedy, ref_text, &oracle, &entry.utt_id);
                corrections.insert(greedy.clone(), corrected);
                let mut hyp_entry = entry.clone();
                hyp_entry.greedy_text = Some(greedy);
                manifest.entries.push(hyp_entry);
            }
            hyp_manifests.insert(lang, manifest);
        }

        let endpoint = OracleEndpoint::new(corrections);
        let config = IterationConfig {
            iteration_index: iteration,
            ..scenario.config.clone()
        };
        outputs.push(run_iteration(&hyp_manifests, &config, &endpoint)?);
    }
    Ok(outputs)
}

/// Stats-only convenience wrapper around [`run_simulation`].
pub fn simulate_stats(scenario: &SimScenario) -> Result<Vec<IterationStats>> {
    Ok(run_simulation(scenario)?
        .into_iter()
        .map(|o| o.stats)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{total_duration, total_duration_hours};
    use crate::metrics::align;
    use crate::textnorm::is_han;

    #[test]
    fn gen_corpus_deterministic() {
        let a = gen_corpus(5, Lang::EN, 8, 50, 3.0, 7).unwrap();
        let b = gen_corpus(5, Lang::EN, 8, 50, 3.0, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_corpus_zh_script_purity() {
        let m = gen_corpus(100, Lang::ZH, 8, 50, 3.0, 1).unwrap();
        for entry in &m.entries {
            let text = entry.ref_text.as_ref().unwrap();
            assert!(text.chars().all(is_han), "non-Han char in {text}");
        }
    }

    #[test]
    fn gen_corpus_duration_expectation() {
        let m = gen_corpus(1000, Lang::EN, 10, 100, 3.6, 42).unwrap();
        let total = total_duration(&m.entries);
        assert!((total - 3600.0).abs() < 0.05 * 3600.0, "total {total}");
    }

    #[test]
    fn corrupt_zero_noise_is_identity() {
        let model = AsrErrorModel {
            sub_p: 0.0,
            del_p: 0.0,
            ins_p: 0.0,
            rng_seed: 0,
        };
        let vocab = Vocab::new(Lang::EN, 20);
        assert_eq!(corrupt("ba be bi", &model, &vocab, "u1"), "ba be bi");
    }

    #[test]
    fn corrupt_deterministic() {
        let model = AsrErrorModel::from_total_rate(0.3, 5);
        let vocab = Vocab::new(Lang::EN, 20);
        let text = "ba be bi bo bu da de di";
        assert_eq!(
            corrupt(text, &model, &vocab, "u1"),
            corrupt(text, &model, &vocab, "u1")
        );
    }

    #[test]
    fn corrupt_rate_converges_to_configured() {
        // 10k tokens, heavy substitution noise.
        let model = AsrErrorModel {
            sub_p: 0.9,
            del_p: 0.0,
            ins_p: 0.0,
            rng_seed: 11,
        };
        let vocab = Vocab::new(Lang::EN, 100);
        let mut errors = 0usize;
        let mut ref_len = 0usize;
        for i in 0..1000 {
            let m = gen_corpus(1, Lang::EN, 10, 100, 3.0, i).unwrap();
            let text = m.entries[0].ref_text.as_ref().unwrap();
            let greedy = corrupt(text, &model, &vocab, &format!("u{i}"));
            let rate = error_rate(text, &greedy, MetricMode::Mer);
            errors += rate.errors;
            ref_len += rate.ref_len;
        }
        assert!(ref_len >= 5000);
        let realized = errors as f64 / ref_len as f64;
        assert!((realized - 0.9).abs() < 0.05, "realized {realized}");
    }

    #[test]
    fn corrupt_mixed_rate_converges() {
        let model = AsrErrorModel::from_total_rate(0.3, 3);
        let vocab = Vocab::new(Lang::EN, 100);
        let mut errors = 0usize;
        let mut ref_len = 0usize;
        for i in 0..2000 {
            let m = gen_corpus(1, Lang::EN, 10, 100, 3.0, 7000 + i).unwrap();
            let text = m.entries[0].ref_text.as_ref().unwrap();
            let greedy = corrupt(text, &model, &vocab, &format!("u{i}"));
            let rate = error_rate(text, &greedy, MetricMode::Mer);
            errors += rate.errors;
            ref_len += rate.ref_len;
        }
        assert!(ref_len >= 10_000);
        let realized = errors as f64 / ref_len as f64;
        assert!((realized - 0.3).abs() < 0.05, "realized {realized}");
    }

    #[test]
    fn oracle_full_fix_restores_reference() {
        let oracle = OracleCorrector {
            fix_p: 1.0,
            decay_k: 0.0,
            rng_seed: 0,
        };
        let got = oracle_correct("rocket blas delay", "rocket blasts delay", &oracle, "u1");
        assert_eq!(got, "rocket blasts delay");
    }

    #[test]
    fn oracle_zero_fix_is_noop() {
        let oracle = OracleCorrector {
            fix_p: 0.0,
            decay_k: 0.0,
            rng_seed: 0,
        };
        assert_eq!(
            oracle_correct("some greedy text", "some other text", &oracle, "u1"),
            "some greedy text"
        );
    }

    #[test]
    fn oracle_never_increases_distance() {
        let model = AsrErrorModel::from_total_rate(0.4, 17);
        let vocab = Vocab::new(Lang::EN, 50);
        let oracle = OracleCorrector {
            fix_p: 0.5,
            decay_k: 0.5,
            rng_seed: 23,
        };
        for i in 0..200 {
            let m = gen_corpus(1, Lang::EN, 12, 50, 3.0, 900 + i).unwrap();
            let reference = m.entries[0].ref_text.as_ref().unwrap();
            let greedy = corrupt(reference, &model, &vocab, &format!("u{i}"));
            let corrected = oracle_correct(&greedy, reference, &oracle, &format!("u{i}"));
            let ref_tokens = MetricMode::Mer.tokenize(reference);
            let before = align(&ref_tokens, &MetricMode::Mer.tokenize(&greedy)).errors();
            let after = align(&ref_tokens, &MetricMode::Mer.tokenize(&corrected)).errors();
            assert!(after <= before, "distance grew: {before} -> {after}");
        }
    }

    fn small_scenario() -> SimScenario {
        SimScenario {
            n_utts: 300,
            ..Default::default()
        }
    }

    #[test]
    fn simulation_filtered_cleaner_than_greedy() {
        let stats = simulate_stats(&small_scenario()).unwrap();
        assert_eq!(stats.len(), 3);
        for s in &stats {
            let greedy = s.greedy_err.expect("refs present");
            let filtered = s.filtered_err.expect("refs present");
            assert!(filtered < greedy, "iter {}: {filtered} !< {greedy}", s.iteration_index);
        }
    }

    #[test]
    fn simulation_clean_corpus_keeps_all() {
        let scenario = SimScenario {
            n_utts: 50,
            error_rates: vec![0.0],
            ..Default::default()
        };
        let stats = simulate_stats(&scenario).unwrap();
        assert_eq!(stats[0].filtered_ratio, 1.0);
    }

    #[test]
    fn simulation_deterministic() {
        let a = simulate_stats(&small_scenario()).unwrap();
        let b = simulate_stats(&small_scenario()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simulation_train_hours_balanced() {
        let outputs = run_simulation(&small_scenario()).unwrap();
        for out in &outputs {
            let (zh, en): (Vec<_>, Vec<_>) = out
                .train_manifest
                .entries
                .iter()
                .partition(|e| e.lang == Lang::ZH);
            let zh_h = total_duration_hours(&zh.into_iter().cloned().collect::<Vec<_>>());
            let en_h = total_duration_hours(&en.into_iter().cloned().collect::<Vec<_>>());
            // equal within one utterance
            assert!((zh_h - en_h).abs() * 3600.0 <= 1.5 * 3.6 + 1e-9);
        }
    }
}
