//! Synthetic corpora with a controlled frequency tie: `tie_group` keywords
//! share posting size `tie_size` with pairwise-distinct posting sets, every
//! other keyword has a size of its own.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use sseleak_core::{Document, Keyword};

use crate::error::{LabError, Result};
use crate::experiment::ExperimentConfig;
use crate::formats::write_file;

const WORDS: &[&str] = &[
    "invoice",
    "contract",
    "budget",
    "meeting",
    "energy",
    "trading",
    "pipeline",
    "schedule",
    "report",
    "market",
    "credit",
    "legal",
    "power",
    "price",
    "forecast",
    "audit",
    "payment",
    "merger",
    "capacity",
    "transfer",
    "option",
    "storage",
    "review",
    "account",
    "portfolio",
    "settlement",
    "turbine",
    "utility",
    "revenue",
    "employee",
    "project",
    "approval",
    "dispute",
    "tariff",
    "exposure",
    "hedge",
    "counterparty",
    "volume",
    "deal",
    "risk",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieSpec {
    pub n_tokens: usize,
    pub tie_group: usize,
    pub tie_size: usize,
    /// 1-based query positions of the tied keywords; default: the last
    /// `tie_group` positions.
    pub tie_positions: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct TieCorpus {
    pub documents: Vec<Document>,
    /// Query order; position `i` becomes token `T{i+1}`.
    pub queries: Vec<Keyword>,
    pub tied: BTreeSet<Keyword>,
    pub postings: BTreeMap<Keyword, BTreeSet<String>>,
}

fn keyword(i: usize) -> Keyword {
    let raw = WORDS.get(i).map(|w| (*w).to_owned()).unwrap_or_else(|| format!("keyword{i:03}"));
    Keyword::new(raw).expect("word list is normalized")
}

fn infeasible(msg: String) -> LabError {
    LabError::Config(format!("infeasible tie corpus: {msg}"))
}

pub fn make_tie_corpus(spec: &TieSpec) -> Result<TieCorpus> {
    let &TieSpec { n_tokens: n, tie_group: g, tie_size: s, .. } = spec;
    if n == 0 {
        return Err(infeasible("n_tokens must be positive".into()));
    }
    if g > n {
        return Err(infeasible(format!("tie_group {g} exceeds n_tokens {n}")));
    }
    if s == 0 && g > 0 {
        return Err(infeasible("tie_size must be positive".into()));
    }
    let positions: Vec<usize> = match &spec.tie_positions {
        Some(p) => p.clone(),
        None => (n - g + 1..=n).collect(),
    };
    let pos_set: BTreeSet<usize> = positions.iter().copied().collect();
    if positions.len() != g || pos_set.len() != g || pos_set.iter().any(|&p| p == 0 || p > n) {
        return Err(infeasible(format!("need {g} distinct tie positions in 1..={n}, got {positions:?}")));
    }

    let unique_sizes: Vec<usize> = (1..).filter(|&k| g == 0 || k != s).take(n - g).collect();
    let max_unique = unique_sizes.last().copied().unwrap_or(0);
    let n_docs = max_unique.max(if g > 0 { s + usize::from(g > 1) } else { 0 }).max(g);
    let width = n_docs.to_string().len().max(3);
    let name = |i: usize| format!("doc{i:0width$}");

    let mut postings = BTreeMap::new();
    let mut queries = Vec::with_capacity(n);
    let mut tied = BTreeSet::new();
    let mut unique = unique_sizes.iter();
    let mut tie_offset = 0;
    for pos in 1..=n {
        let w = keyword(pos - 1);
        let files: BTreeSet<String> = if pos_set.contains(&pos) {
            let off = tie_offset;
            tie_offset += 1;
            tied.insert(w.clone());
            (0..s).map(|i| name((off + i) % n_docs)).collect()
        } else {
            let &k = unique.next().expect("one unique size per untied position");
            (0..k).map(name).collect()
        };
        postings.insert(w.clone(), files);
        queries.push(w);
    }

    let mut bodies: BTreeMap<String, Vec<&str>> = (0..n_docs).map(|i| (name(i), Vec::new())).collect();
    for (w, files) in &postings {
        for f in files {
            bodies.get_mut(f).expect("names are in range").push(w.as_str());
        }
    }
    let documents = bodies
        .into_iter()
        .map(|(f, words)| Document::new(f, words.join("\n")))
        .collect::<std::result::Result<_, _>>()?;
    Ok(TieCorpus { documents, queries, tied, postings })
}

/// Writes `<out>/corpus/<doc>` and `<out>/experiment.toml` (simulated
/// provider, full coverage, output under `<out>/run`).
pub fn write_tie_corpus(out: &Path, corpus: &TieCorpus, seed: u64) -> Result<ExperimentConfig> {
    let dir = out.join("corpus");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(LabError::io(&dir))?;
    }
    for d in &corpus.documents {
        write_file(&dir.join(d.filename()), d.body())?;
    }
    let mut cfg = ExperimentConfig::new("corpus", "run");
    cfg.seed = seed;
    cfg.query_keywords = corpus.queries.iter().map(|w| w.as_str().to_owned()).collect();
    write_file(&out.join("experiment.toml"), cfg.to_toml().as_bytes())?;
    cfg.corpus_dir = dir;
    cfg.output_dir = out.join("run");
    Ok(cfg)
}
