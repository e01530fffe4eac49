//! Command-line surface for the curation pipeline. Each stage is runnable
//! standalone on manifest files so partial pipelines compose, and the
//! expensive LLM stage can be resumed without redoing the rest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cscurate::config::{FileConfig, IterationConfig};
use cscurate::filter::{apply_filter, balance_durations, FilterConfig};
use cscurate::llm_correct::{
    correct_batch, BatchOutcome, ChatClient, CorrectionBatch, HttpChatClient, MockBehavior,
    MockEndpoint, PromptLang, PromptTemplate,
};
use cscurate::manifest::{read_manifest, write_manifest, Lang, Manifest, ManifestEntry};
use cscurate::metrics::{correction_quality, error_rate, MetricMode, ScoredTexts};
use cscurate::orchestrator::{report, run_iteration, write_outputs, IterationStats};
use cscurate::sim::{run_simulation, SimScenario};
use cscurate::Error;

#[derive(Parser)]
#[command(name = "cscurate", version, about = "Pseudo-label curation for code-switching ASR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace the HTTP endpoint: "echo" or "scripted:FILE".
    #[arg(long)]
    mock: Option<String>,
    /// Override the config RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Hypo-MER keep threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Override the correction batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Score hypothesis manifests against a reference manifest.
    Score {
        /// Manifest carrying reference `text`.
        ref_manifest: PathBuf,
        /// Manifest carrying `greedy_text` (and optionally `corrected_text`).
        hyp_manifest: PathBuf,
        #[arg(long, default_value = "MER")]
        mode: MetricMode,
    },
    /// Run the LLM correction stage only; writes a manifest with
    /// `corrected_text` filled in.
    Correct {
        manifests: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compute Hypo-MER decisions only; writes a decisions manifest.
    Filter {
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "MER")]
        metric: MetricMode,
    },
    /// Balance kept ZH/EN manifests to equal durations.
    Balance {
        #[arg(long)]
        zh: PathBuf,
        #[arg(long)]
        en: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one full iteration: correct, filter, balance, report.
    Iterate {
        manifests: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the synthetic end-to-end simulation.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Render a stats table from stats.json files.
    Report {
        stats: Vec<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 2,
        Error::Transport(_) | Error::EndpointConfig(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_config(common: &CommonOpts) -> cscurate::Result<IterationConfig> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut config = file.resolve()?;
    if let Some(seed) = common.seed {
        config.rng_seed = seed;
    }
    if let Some(threshold) = common.threshold {
        config.filter.threshold = threshold;
    }
    if let Some(batch_size) = common.batch_size {
        config.batch_size = batch_size;
    }
    config.validate()?;
    Ok(config)
}

fn build_client(
    common: &CommonOpts,
    config: &IterationConfig,
) -> cscurate::Result<Box<dyn ChatClient>> {
    match common.mock.as_deref() {
        None => Ok(Box::new(HttpChatClient::from_env(config.endpoint.clone())?)),
        Some("echo") => Ok(Box::new(MockEndpoint::new(MockBehavior::Echo))),
        Some(spec) => {
            let file = spec.strip_prefix("scripted:").ok_or_else(|| {
                Error::Config(format!("unknown mock spec: {spec} (use echo or scripted:FILE)"))
            })?;
            let text =
                std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            let responses = text.lines().map(|l| l.to_string()).collect();
            Ok(Box::new(MockEndpoint::new(MockBehavior::Scripted(responses))))
        }
    }
}

/// Merges any number of manifests into per-language manifests, preserving
/// per-file order.
fn load_by_lang(paths: &[PathBuf]) -> cscurate::Result<HashMap<Lang, Manifest>> {
    if paths.is_empty() {
        return Err(Error::Config("no input manifests given".into()));
    }
    let mut by_lang: HashMap<Lang, Manifest> = HashMap::new();
    for path in paths {
        let manifest = read_manifest(path)?;
        for entry in manifest.entries {
            by_lang
                .entry(entry.lang)
                .or_insert_with(|| Manifest::new(format!("{}", entry.lang)))
                .entries
                .push(entry);
        }
    }
    for manifest in by_lang.values() {
        manifest.validate()?;
    }
    Ok(by_lang)
}

fn run(command: Command) -> cscurate::Result<()> {
    match command {
        Command::Score {
            ref_manifest,
            hyp_manifest,
            mode,
        } => cmd_score(&ref_manifest, &hyp_manifest, mode),
        Command::Correct { manifests, common } => cmd_correct(&manifests, &common),
        Command::Filter {
            manifest,
            common,
            metric,
        } => cmd_filter(&manifest, &common, metric),
        Command::Balance { zh, en, out } => cmd_balance(&zh, &en, &out),
        Command::Iterate { manifests, common } => cmd_iterate(&manifests, &common),
        Command::Simulate { common } => cmd_simulate(&common),
        Command::Report { stats } => cmd_report(&stats),
    }
}

fn cmd_score(ref_path: &Path, hyp_path: &Path, mode: MetricMode) -> cscurate::Result<()> {
    let reference = read_manifest(ref_path)?;
    let hypothesis = read_manifest(hyp_path)?;
    let ref_by_id: HashMap<&str, &ManifestEntry> = reference
        .entries
        .iter()
        .map(|e| (e.utt_id.as_str(), e))
        .collect();
    let missing: Vec<&str> = hypothesis
        .entries
        .iter()
        .filter(|e| !ref_by_id.contains_key(e.utt_id.as_str()))
        .map(|e| e.utt_id.as_str())
        .chain(
            reference
                .entries
                .iter()
                .filter(|e| !hypothesis.entries.iter().any(|h| h.utt_id == e.utt_id))
                .map(|e| e.utt_id.as_str()),
        )
        .collect();
    if !missing.is_empty() {
        let sample: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(Error::Config(format!(
            "utt_id mismatch between manifests; first offenders: {}",
            sample.join(", ")
        )));
    }

    let mut greedy_errors = 0usize;
    let mut corrected_errors = 0usize;
    let mut ref_len = 0usize;
    let mut scored = Vec::new();
    let mut all_have_corrected = true;
    for hyp in &hypothesis.entries {
        let reference_entry = ref_by_id[hyp.utt_id.as_str()];
        let ref_text = reference_entry.ref_text.as_ref().ok_or_else(|| {
            Error::MissingField {
                utt_id: reference_entry.utt_id.clone(),
                field: "text".into(),
            }
        })?;
        let greedy = hyp.greedy_text.as_ref().ok_or_else(|| Error::MissingField {
            utt_id: hyp.utt_id.clone(),
            field: "greedy_text".into(),
        })?;
        let rate = error_rate(ref_text, greedy, mode);
        greedy_errors += rate.errors;
        ref_len += rate.ref_len;
        match hyp.corrected_text.as_ref() {
            Some(corrected) => {
                corrected_errors += error_rate(ref_text, corrected, mode).errors;
                scored.push(ScoredTexts {
                    utt_id: &hyp.utt_id,
                    ref_text,
                    greedy_text: greedy,
                    corrected_text: corrected,
                });
            }
            None => all_have_corrected = false,
        }
    }
    let denom = ref_len.max(1) as f64;
    println!("utterances     {}", hypothesis.len());
    println!("greedy {mode}     {:.4}", greedy_errors as f64 / denom);
    if all_have_corrected && !scored.is_empty() {
        println!("corrected {mode}  {:.4}", corrected_errors as f64 / denom);
        let quality = correction_quality(&scored, mode)?;
        print!("{}", quality.render_table());
    }
    Ok(())
}

fn template_for(lang: Lang) -> cscurate::Result<PromptTemplate> {
    match lang {
        Lang::ZH => Ok(PromptTemplate::builtin(PromptLang::ZH)),
        Lang::EN => Ok(PromptTemplate::builtin(PromptLang::EN)),
        Lang::CS => Err(Error::Config("no correction prompt for CS entries".into())),
    }
}

fn cmd_correct(paths: &[PathBuf], common: &CommonOpts) -> cscurate::Result<()> {
    let config = load_config(common)?;
    let client = build_client(common, &config)?;
    let by_lang = load_by_lang(paths)?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;

    let mut langs: Vec<Lang> = by_lang.keys().copied().collect();
    langs.sort_by_key(|l| l.to_string());
    for lang in langs {
        let manifest = &by_lang[&lang];
        let template = template_for(lang)?;
        let mut out = Manifest::new(format!("corrected-{lang}"));
        let entry_refs: Vec<&ManifestEntry> = manifest.entries.iter().collect();
        for chunk in entry_refs.chunks(config.batch_size) {
            let batch = CorrectionBatch::from_entries(chunk)?;
            match correct_batch(client.as_ref(), &template, &batch, config.retry)? {
                BatchOutcome::Corrected(corrections) => {
                    for (entry, corrected) in chunk.iter().zip(corrections) {
                        let mut e = (*entry).clone();
                        e.corrected_text = Some(corrected);
                        out.entries.push(e);
                    }
                }
                BatchOutcome::Dropped(dropped) => {
                    log::warn!(
                        "dropped batch of {} utterances after {} attempts",
                        dropped.utt_ids.len(),
                        dropped.attempts
                    );
                    for entry in chunk {
                        let mut e = (*entry).clone();
                        e.extra
                            .insert("batch_dropped".into(), serde_json::Value::Bool(true));
                        out.entries.push(e);
                    }
                }
            }
        }
        let path = common.out.join(format!("corrected.{lang}.manifest"));
        write_manifest(&out, &path)?;
        println!("{lang}: wrote {} entries to {}", out.len(), path.display());
    }
    Ok(())
}

fn cmd_filter(path: &Path, common: &CommonOpts, metric: MetricMode) -> cscurate::Result<()> {
    let manifest = read_manifest(path)?;
    let config = FilterConfig {
        threshold: common.threshold.unwrap_or(0.1),
        metric_mode: metric,
        ..Default::default()
    };
    let (kept, _dropped, decisions) = apply_filter(&manifest.entries, &config)?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    let mut out = Manifest::new("decisions");
    for entry in &manifest.entries {
        let decision = decisions
            .iter()
            .find(|d| d.utt_id == entry.utt_id)
            .expect("decision for every entry");
        let mut e = entry.clone();
        e.hypo_mer = Some(decision.hypo_mer);
        e.kept = Some(decision.kept);
        out.entries.push(e);
    }
    let out_path = common.out.join("decisions.manifest");
    write_manifest(&out, &out_path)?;
    println!(
        "kept {}/{} utterances at threshold {} -> {}",
        kept.len(),
        manifest.len(),
        config.threshold,
        out_path.display()
    );
    Ok(())
}

fn cmd_balance(zh_path: &Path, en_path: &Path, out: &Path) -> cscurate::Result<()> {
    let zh = read_manifest(zh_path)?;
    let en = read_manifest(en_path)?;
    let (zh_out, en_out) = balance_durations(zh.entries, en.entries);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let zh_manifest = Manifest {
        name: "balanced-ZH".into(),
        entries: zh_out,
    };
    let en_manifest = Manifest {
        name: "balanced-EN".into(),
        entries: en_out,
    };
    write_manifest(&zh_manifest, out.join("balanced.ZH.manifest"))?;
    write_manifest(&en_manifest, out.join("balanced.EN.manifest"))?;
    println!(
        "balanced: ZH {:.2} h, EN {:.2} h",
        cscurate::manifest::total_duration_hours(&zh_manifest.entries),
        cscurate::manifest::total_duration_hours(&en_manifest.entries)
    );
    Ok(())
}

fn cmd_iterate(paths: &[PathBuf], common: &CommonOpts) -> cscurate::Result<()> {
    let config = load_config(common)?;
    let client = build_client(common, &config)?;
    let by_lang = load_by_lang(paths)?;
    let out_dir = common.out.join(format!("iter_{}", config.iteration_index));
    let output = match run_iteration(&by_lang, &config, client.as_ref()) {
        Ok(output) => output,
        Err(err) => {
            // no partial outputs left behind
            let _ = std::fs::remove_dir_all(&out_dir);
            return Err(err);
        }
    };
    write_outputs(&output, &out_dir)?;
    print!("{}", report(std::slice::from_ref(&output.stats)));
    Ok(())
}

fn cmd_simulate(common: &CommonOpts) -> cscurate::Result<()> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut scenario = SimScenario::from_file_config(&file)?;
    if let Some(seed) = common.seed {
        scenario.config.rng_seed = seed;
    }
    if let Some(threshold) = common.threshold {
        scenario.config.filter.threshold = threshold;
    }
    if let Some(batch_size) = common.batch_size {
        scenario.config.batch_size = batch_size;
    }
    let outputs = run_simulation(&scenario)?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    let stats: Vec<IterationStats> = outputs.iter().map(|o| o.stats.clone()).collect();
    for output in &outputs {
        let dir = common.out.join(format!("iter_{}", output.stats.iteration_index));
        write_outputs(output, &dir)?;
    }
    let summary = report(&stats);
    let stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(common.out.join("stats.json"), stats_json)
        .map_err(|e| Error::io(common.out.join("stats.json"), e))?;
    std::fs::write(common.out.join("stats.txt"), &summary)
        .map_err(|e| Error::io(common.out.join("stats.txt"), e))?;
    print!("{summary}");
    Ok(())
}

fn cmd_report(paths: &[PathBuf]) -> cscurate::Result<()> {
    let mut all_stats: Vec<IterationStats> = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        // Accept both a single stats object and a list.
        if let Ok(list) = serde_json::from_str::<Vec<IterationStats>>(&text) {
            all_stats.extend(list);
        } else {
            let single: IterationStats = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            all_stats.push(single);
        }
    }
    print!("{}", report(&all_stats));
    Ok(())
}
