#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

pub const VOCAB: &[&str] = &[
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
];

/// `(filename, body)` pairs; bodies are vocabulary words separated by
/// spaces, so the keyword sets can be recounted by splitting.
pub fn random_docs(rng: &mut impl Rng, max_docs: usize, vocab: usize) -> Vec<(String, String)> {
    let n = rng.random_range(1..=max_docs);
    let density = rng.random_range(0.05..0.6);
    (0..n)
        .map(|i| {
            let mut words: Vec<&str> = VOCAB[..vocab].iter().copied().filter(|_| rng.random_bool(density)).collect();
            if !words.is_empty() && rng.random_bool(0.3) {
                let dup = *words.choose(rng).unwrap();
                words.push(dup);
            }
            words.shuffle(rng);
            (format!("doc{i:02}"), words.join(" "))
        })
        .collect()
}

pub fn write_corpus(dir: &Path, docs: &[(String, String)]) {
    std::fs::create_dir_all(dir).unwrap();
    for (name, body) in docs {
        std::fs::write(dir.join(name), body).unwrap();
    }
}

pub fn words_of(body: &str) -> BTreeSet<String> {
    body.split_whitespace().map(str::to_owned).collect()
}

pub fn brute_postings(docs: &[(String, String)]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (name, body) in docs {
        for w in words_of(body) {
            out.entry(w).or_default().insert(name.clone());
        }
    }
    out
}
