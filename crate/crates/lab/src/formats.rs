//! File formats shared by the CLI subcommands and the experiment runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sseleak_core::{
    AccessOp, AttackResult, FileAccessEvent, InvertedIndex, Keyword, QueryObservation, SearchToken, Tally,
};

use crate::error::{LabError, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    serde_json::from_str(&text).map_err(|source| LabError::Json { path: path.to_owned(), source })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(LabError::io(parent))?;
    }
    fs::write(path, bytes).map_err(LabError::io(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(LabError::io(parent))?;
    }
    let f = fs::File::create(path).map_err(LabError::io(path))?;
    let mut w = BufWriter::new(f);
    for row in rows {
        serde_json::to_writer(&mut w, &row).expect("serializable");
        w.write_all(b"\n").map_err(LabError::io(path))?;
    }
    w.flush().map_err(LabError::io(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|source| LabError::Json { path: path.to_owned(), source }))
        .collect()
}

/// Canonical index dump: compact JSON object, keys and arrays sorted. This
/// is also the attacker's auxiliary-knowledge format.
pub fn index_to_json(idx: &InvertedIndex) -> String {
    let map: BTreeMap<&str, &BTreeSet<String>> = idx.iter().map(|(w, f)| (w.as_str(), f)).collect();
    serde_json::to_string(&map).expect("serializable")
}

pub fn index_from_json(text: &str) -> Result<InvertedIndex, String> {
    let raw: BTreeMap<String, BTreeSet<String>> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut postings = BTreeMap::new();
    for (w, files) in raw {
        let k = Keyword::new(w).map_err(|e| e.to_string())?;
        for f in &files {
            sseleak_core::corpus::validate_filename(f).map_err(|e| e.to_string())?;
        }
        postings.insert(k, files);
    }
    InvertedIndex::from_postings(postings).map_err(|e| e.to_string())
}

pub fn read_index_json(path: &Path) -> Result<InvertedIndex> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    index_from_json(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}

/// One line of the probe feed (and of an archived `events.jsonl`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeLine {
    pub ts_ns: u64,
    pub pid: u32,
    pub op: String,
    pub path: String,
}

impl From<&FileAccessEvent> for ProbeLine {
    fn from(e: &FileAccessEvent) -> Self {
        Self { ts_ns: e.timestamp_ns, pid: e.pid, op: e.op.as_str().to_owned(), path: e.path.clone() }
    }
}

impl ProbeLine {
    pub fn to_event(&self) -> Option<FileAccessEvent> {
        Some(FileAccessEvent {
            timestamp_ns: self.ts_ns,
            pid: self.pid,
            op: AccessOp::parse(&self.op)?,
            path: self.path.clone(),
        })
    }
}

/// One line of `windows.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowLine {
    pub query_id: u64,
    pub begin_ns: u64,
    pub end_ns: u64,
    pub token: String,
    pub result_size: usize,
}

/// One entry of `observations.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub token: String,
    pub result_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<Vec<String>>,
}

pub fn parse_token(s: &str) -> Result<SearchToken> {
    SearchToken::from_hex(s).ok_or_else(|| LabError::Config(format!("{s:?} is not a 32-digit hex token")))
}

impl ObservationEntry {
    pub fn from_observation(o: &QueryObservation) -> Self {
        Self {
            token: o.token().to_hex(),
            result_size: o.result_size(),
            files: o.file_set().map(|f| f.iter().cloned().collect()),
        }
    }

    pub fn to_observation(&self) -> Result<QueryObservation> {
        let token = parse_token(&self.token)?;
        Ok(match &self.files {
            None => QueryObservation::new(token, self.result_size),
            Some(files) => {
                let set: BTreeSet<String> = files.iter().cloned().collect();
                if set.len() != files.len() {
                    return Err(LabError::Config(format!("duplicate files in observation for {}", self.token)));
                }
                QueryObservation::with_files(token, self.result_size, set)?
            }
        })
    }
}

/// `truth.json`: token hex → keyword.
pub type TruthFile = BTreeMap<String, String>;

pub fn truth_to_file(truth: &BTreeMap<SearchToken, Keyword>) -> TruthFile {
    truth.iter().map(|(t, w)| (t.to_hex(), w.as_str().to_owned())).collect()
}

pub fn truth_from_file(file: &TruthFile) -> Result<BTreeMap<SearchToken, Keyword>> {
    file.iter().map(|(t, w)| Ok((parse_token(t)?, Keyword::new(w.clone())?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub correct: usize,
    pub wrong: usize,
    pub unresolved: usize,
}

impl From<Tally> for TallyEntry {
    fn from(t: Tally) -> Self {
        Self { correct: t.correct, wrong: t.wrong, unresolved: t.unresolved }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenOutcome {
    pub token: String,
    pub guessed_keyword: Option<String>,
    pub status: String,
    /// Absent when no ground truth was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// `attack_result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResultFile {
    pub attack: String,
    pub coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<TallyEntry>,
    /// In order of first observation.
    pub tokens: Vec<TokenOutcome>,
}

impl AttackResultFile {
    pub fn build(
        attack: &str,
        coverage: f64,
        observations: &[QueryObservation],
        result: &AttackResult,
        truth: Option<&BTreeMap<SearchToken, Keyword>>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let tokens = observations
            .iter()
            .filter(|o| seen.insert(o.token()))
            .map(|o| {
                let t = o.token();
                let g = result.guess(&t).expect("attack covers every observed token");
                TokenOutcome {
                    token: t.to_hex(),
                    guessed_keyword: g.keyword.as_ref().map(|w| w.as_str().to_owned()),
                    status: g.status.as_str().to_owned(),
                    correct: truth.map(|tr| tr.get(&t).is_some_and(|w| g.keyword.as_ref() == Some(w))),
                }
            })
            .collect();
        let (accuracy, tally) = match truth {
            Some(tr) => (Some(sseleak_core::score(result, tr)?), Some(result.tally(tr)?.into())),
            None => (None, None),
        };
        Ok(Self { attack: attack.to_owned(), coverage, accuracy, tally, tokens })
    }
}
