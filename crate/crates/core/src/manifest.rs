//! Utterance manifest data model and line-oriented I/O.
//!
//! Manifests are UTF-8 text, one JSON object per line, in the field order
//! `utt_id`, `audio_filepath`, `duration`, `lang`, `text`, `greedy_text`,
//! `corrected_text`, `hypo_mer`, `kept`, `source`. Unknown fields are
//! preserved verbatim so upstream decoder metadata survives a round trip.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

/// Language tag of an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lang {
    /// Mandarin.
    ZH,
    /// English.
    EN,
    /// Code-switched Mandarin-English.
    CS,
}

impl std::str::FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ZH" => Ok(Lang::ZH),
            "EN" => Ok(Lang::EN),
            "CS" => Ok(Lang::CS),
            other => Err(Error::Config(format!("unknown lang: {other}"))),
        }
    }
}

impl std::fmt::Display for Lang {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Lang::ZH => "ZH",
            Lang::EN => "EN",
            Lang::CS => "CS",
        })
    }
}

/// One utterance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    #[serde(rename = "audio_filepath")]
    pub audio_ref: String,
    #[serde(rename = "duration")]
    pub duration_s: f64,
    pub lang: Lang,
    #[serde(rename = "text", skip_serializing_if = "Option::is_none", default)]
    pub ref_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub greedy_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub corrected_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hypo_mer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kept: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<String>,
    /// Fields this pipeline does not interpret, kept for round-tripping.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ManifestEntry {
    pub fn new(utt_id: impl Into<String>, audio_ref: impl Into<String>, duration_s: f64, lang: Lang) -> Self {
        ManifestEntry {
            utt_id: utt_id.into(),
            audio_ref: audio_ref.into(),
            duration_s,
            lang,
            ref_text: None,
            greedy_text: None,
            corrected_text: None,
            hypo_mer: None,
            kept: None,
            source: None,
            extra: Map::new(),
        }
    }

    /// Checks the per-entry invariants. A zero duration is legal but logged.
    pub fn validate(&self) -> Result<()> {
        if !self.duration_s.is_finite() || self.duration_s < 0.0 {
            return Err(Error::InvalidEntry {
                utt_id: self.utt_id.clone(),
                reason: format!("duration must be finite and non-negative, got {}", self.duration_s),
            });
        }
        if self.duration_s == 0.0 {
            log::warn!("utterance \"{}\" has zero duration", self.utt_id);
        }
        if self.kept.is_some() && self.hypo_mer.is_none() {
            return Err(Error::InvalidEntry {
                utt_id: self.utt_id.clone(),
                reason: "kept is set but hypo_mer is missing".into(),
            });
        }
        if self.hypo_mer.is_some() && (self.greedy_text.is_none() || self.corrected_text.is_none()) {
            return Err(Error::InvalidEntry {
                utt_id: self.utt_id.clone(),
                reason: "hypo_mer is set but greedy_text/corrected_text are missing".into(),
            });
        }
        Ok(())
    }
}

/// An ordered collection of utterances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(name: impl Into<String>) -> Self {
        Manifest {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Validates every entry and utt_id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (idx, entry) in self.entries.iter().enumerate() {
            entry.validate()?;
            if let Some(_first) = seen.insert(entry.utt_id.as_str(), idx) {
                return Err(Error::InvalidEntry {
                    utt_id: entry.utt_id.clone(),
                    reason: "duplicate utt_id".into(),
                });
            }
        }
        Ok(())
    }
}

/// Reads a manifest, preserving entry order. Malformed lines and duplicate
/// ids are reported with their line number.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut manifest = Manifest::new(name);
    let mut seen = HashMap::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: lineno,
                reason: e.to_string(),
            })?;
        if seen.insert(entry.utt_id.clone(), lineno).is_some() {
            return Err(Error::DuplicateUttId {
                path: path.to_path_buf(),
                line: lineno,
                utt_id: entry.utt_id,
            });
        }
        manifest.entries.push(entry);
    }
    Ok(manifest)
}

/// Writes a manifest, one record per line. Output is byte-deterministic for
/// identical input; the manifest is validated before anything is written.
pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    manifest.validate()?;
    let mut buf = Vec::new();
    for entry in &manifest.entries {
        serde_json::to_writer(&mut buf, entry).expect("manifest entry serializes");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Exact sum of entry durations in seconds.
pub fn total_duration(entries: &[ManifestEntry]) -> f64 {
    entries.iter().map(|e| e.duration_s).sum()
}

pub fn total_duration_hours(entries: &[ManifestEntry]) -> f64 {
    total_duration(entries) / 3600.0
}

/// Splits entries by language, preserving in-bucket order. Every language
/// gets a bucket even when empty.
pub fn partition_by_lang(manifest: &Manifest) -> HashMap<Lang, Vec<ManifestEntry>> {
    let mut buckets: HashMap<Lang, Vec<ManifestEntry>> = HashMap::new();
    for lang in [Lang::ZH, Lang::EN, Lang::CS] {
        buckets.insert(lang, Vec::new());
    }
    for entry in &manifest.entries {
        buckets.get_mut(&entry.lang).expect("bucket exists").push(entry.clone());
    }
    buckets
}
