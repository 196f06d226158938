//! Plaintext documents, keyword extraction and the plaintext inverted index.
//!
//! The same [`InvertedIndex`] serves two roles: the data owner encrypts it,
//! and the attacker holds (part of) it as auxiliary knowledge.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid document filename {0:?}")]
    InvalidFilename(String),
    #[error("invalid keyword {0:?}")]
    InvalidKeyword(String),
    #[error("duplicate document filenames: {}", .0.join(", "))]
    DuplicateFilenames(Vec<String>),
    #[error("posting set for keyword {0:?} is empty")]
    EmptyPosting(String),
}

/// Longest filename the wire format can carry (2-byte length prefix).
pub const MAX_FILENAME_LEN: usize = u16::MAX as usize;

/// Checks that `name` is a relative, `/`-separated path with no traversal
/// segments.
pub fn validate_filename(name: &str) -> Result<(), CorpusError> {
    let bad = name.is_empty()
        || name.len() > MAX_FILENAME_LEN
        || name.starts_with('/')
        || name.contains('\\')
        || name.contains('\0')
        || name.split('/').any(|seg| seg.is_empty() || seg == "." || seg == "..");
    if bad {
        Err(CorpusError::InvalidFilename(name.to_owned()))
    } else {
        Ok(())
    }
}

/// A plaintext document. The corpus-relative filename is its identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    filename: String,
    body: Vec<u8>,
}

impl Document {
    pub fn new(filename: impl Into<String>, body: impl Into<Vec<u8>>) -> Result<Self, CorpusError> {
        let filename = filename.into();
        validate_filename(&filename)?;
        Ok(Self { filename, body: body.into() })
    }

    pub fn filename(&self) -> &str {
        &self.filename
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }
}

/// A normalized keyword: lowercase, alphanumeric, with at least one letter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Keyword(String);

impl Keyword {
    pub fn new(value: impl Into<String>) -> Result<Self, CorpusError> {
        let value = value.into();
        let ok = !value.is_empty()
            && value.chars().any(char::is_alphabetic)
            && value.chars().all(|c| {
                let mut lower = c.to_lowercase();
                c.is_alphanumeric() && lower.next() == Some(c) && lower.next().is_none()
            });
        if ok {
            Ok(Self(value))
        } else {
            Err(CorpusError::InvalidKeyword(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::str::FromStr for Keyword {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

pub const DEFAULT_MIN_KEYWORD_LEN: usize = 3;

pub const ENGLISH_STOPWORDS: &[&str] = &[
    "about", "after", "all", "also", "and", "any", "are", "because", "been", "before", "being", "but", "can", "could",
    "did", "does", "for", "from", "had", "has", "have", "her", "here", "him", "his", "how", "into", "its", "just",
    "more", "most", "not", "now", "only", "other", "our", "out", "over", "she", "should", "some", "such", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "very", "was",
    "were", "what", "when", "where", "which", "while", "who", "will", "with", "would", "you", "your",
];

/// Tokenizer configuration.
///
/// Bodies are decoded as UTF-8 with invalid sequences dropped, split on
/// non-alphanumeric characters and lowercased. Tokens shorter than
/// `min_len` characters, purely numeric tokens and stopwords are discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalizer {
    min_len: usize,
    stopwords: BTreeSet<String>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            min_len: DEFAULT_MIN_KEYWORD_LEN,
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| (*s).to_owned()).collect(),
        }
    }
}

impl Normalizer {
    pub fn new<I, S>(min_len: usize, stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { min_len, stopwords: stopwords.into_iter().map(|s| s.as_ref().to_lowercase()).collect() }
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn normalize_token(&self, raw: &str) -> Option<Keyword> {
        let lowered: String = raw.chars().flat_map(char::to_lowercase).filter(|c| c.is_alphanumeric()).collect();
        if lowered.chars().count() < self.min_len || self.stopwords.contains(&lowered) {
            return None;
        }
        // rejects purely numeric tokens as well as anything not case-stable
        Keyword::new(lowered).ok()
    }

    pub fn extract(&self, body: &[u8]) -> BTreeSet<Keyword> {
        let mut text = String::with_capacity(body.len());
        for chunk in body.utf8_chunks() {
            text.push_str(chunk.valid());
        }
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .filter_map(|t| self.normalize_token(t))
            .collect()
    }

    pub fn extract_keywords(&self, doc: &Document) -> BTreeSet<Keyword> {
        self.extract(doc.body())
    }

    pub fn build_index(&self, docs: &[Document]) -> Result<InvertedIndex, CorpusError> {
        let mut seen = BTreeSet::new();
        let mut dups = BTreeSet::new();
        for d in docs {
            if !seen.insert(d.filename()) {
                dups.insert(d.filename().to_owned());
            }
        }
        if !dups.is_empty() {
            return Err(CorpusError::DuplicateFilenames(dups.into_iter().collect()));
        }
        let mut index = InvertedIndex::default();
        for d in docs {
            index.insert_document(d.filename(), self.extract_keywords(d));
        }
        Ok(index)
    }
}

/// Keywords of `doc` under the default [`Normalizer`].
pub fn extract_keywords(doc: &Document) -> BTreeSet<Keyword> {
    Normalizer::default().extract_keywords(doc)
}

/// Inverted index of `docs` under the default [`Normalizer`].
pub fn build_inverted_index(docs: &[Document]) -> Result<InvertedIndex, CorpusError> {
    Normalizer::default().build_index(docs)
}

/// Map from keyword to the (non-empty) set of filenames containing it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvertedIndex {
    postings: BTreeMap<Keyword, BTreeSet<String>>,
}

impl InvertedIndex {
    pub fn from_postings(postings: BTreeMap<Keyword, BTreeSet<String>>) -> Result<Self, CorpusError> {
        for (w, files) in &postings {
            if files.is_empty() {
                return Err(CorpusError::EmptyPosting(w.as_str().to_owned()));
            }
            for f in files {
                validate_filename(f)?;
            }
        }
        Ok(Self { postings })
    }

    pub fn postings(&self, w: &Keyword) -> Option<&BTreeSet<String>> {
        self.postings.get(w)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Keyword, &BTreeSet<String>)> {
        self.postings.iter()
    }

    pub fn keywords(&self) -> impl Iterator<Item = &Keyword> {
        self.postings.keys()
    }

    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    /// Every filename referenced by some posting set.
    pub fn documents(&self) -> BTreeSet<&str> {
        self.postings.values().flat_map(|s| s.iter().map(String::as_str)).collect()
    }

    pub fn contains_document(&self, filename: &str) -> bool {
        self.postings.values().any(|s| s.contains(filename))
    }

    pub fn insert_document<I>(&mut self, filename: &str, keywords: I)
    where
        I: IntoIterator<Item = Keyword>,
    {
        for w in keywords {
            self.postings.entry(w).or_default().insert(filename.to_owned());
        }
    }

    /// Removes `filename` from every posting set, dropping sets that become
    /// empty. Returns the keywords the document was listed under.
    pub fn remove_document(&mut self, filename: &str) -> Vec<Keyword> {
        let mut touched = Vec::new();
        self.postings.retain(|w, files| {
            if files.remove(filename) {
                touched.push(w.clone());
            }
            !files.is_empty()
        });
        touched
    }

    /// The index with every posting restricted to `known` documents.
    pub fn restricted_to(&self, known: &BTreeSet<String>) -> Self {
        let postings = self
            .postings
            .iter()
            .filter_map(|(w, files)| {
                let kept: BTreeSet<String> = files.intersection(known).cloned().collect();
                (!kept.is_empty()).then(|| (w.clone(), kept))
            })
            .collect();
        Self { postings }
    }

    pub fn into_postings(self) -> BTreeMap<Keyword, BTreeSet<String>> {
        self.postings
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn kw(s: &str) -> Keyword {
        Keyword::new(s).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| (*s).to_owned()).collect()
    }

    #[test]
    fn case_folding_and_dedup() {
        let d = Document::new("doc1", "Invoice invoice CONTRACT").unwrap();
        let got = extract_keywords(&d);
        assert_eq!(got, [kw("invoice"), kw("contract")].into_iter().collect());
    }

    #[test]
    fn empty_body_has_no_keywords() {
        let d = Document::new("doc1", "").unwrap();
        assert!(extract_keywords(&d).is_empty());
    }

    #[test]
    fn min_length_digits_and_stopwords() {
        let n = Normalizer::new(3, ["the"]);
        let got = n.extract(b"a1 budget-2024 the");
        assert_eq!(got, [kw("budget")].into_iter().collect());
    }

    #[test]
    fn invalid_utf8_is_dropped_not_split() {
        let n = Normalizer::default();
        let got = n.extract(b"inv\xffoice \xc3\xa9t\xc3\xa9");
        assert_eq!(got, [kw("invoice"), kw("été")].into_iter().collect());
    }

    #[test]
    fn unicode_lowercasing() {
        let n = Normalizer::default();
        assert_eq!(n.extract("ÜBER Straße".as_bytes()), [kw("über"), kw("straße")].into_iter().collect());
    }

    #[test]
    fn keyword_validation() {
        assert!(Keyword::new("").is_err());
        assert!(Keyword::new("Invoice").is_err());
        assert!(Keyword::new("in voice").is_err());
        assert!(Keyword::new("2024").is_err());
        assert!(Keyword::new("term01").is_ok());
    }

    #[test]
    fn filename_rules() {
        for bad in ["", "/abs", "a/../b", "..", "./x", "a//b", "a\\b", "trail/"] {
            assert!(Document::new(bad, "").is_err(), "{bad:?} should be rejected");
        }
        for good in ["doc1", "maildir/allen-p/1.", "a.b/c"] {
            assert!(Document::new(good, "").is_ok(), "{good:?} should be accepted");
        }
    }

    #[test]
    fn index_matches_worked_example() {
        let docs = vec![
            Document::new("doc1", "invoice").unwrap(),
            Document::new("doc2", "contract").unwrap(),
            Document::new("doc3", "invoice").unwrap(),
            Document::new("doc4", "contract").unwrap(),
            Document::new("doc7", "invoice").unwrap(),
        ];
        let idx = build_inverted_index(&docs).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.postings(&kw("invoice")), Some(&set(&["doc1", "doc3", "doc7"])));
        assert_eq!(idx.postings(&kw("contract")), Some(&set(&["doc2", "doc4"])));
    }

    #[test]
    fn empty_corpus_empty_index() {
        assert!(build_inverted_index(&[]).unwrap().is_empty());
    }

    #[test]
    fn duplicate_filenames_are_named() {
        let docs = vec![
            Document::new("b", "x").unwrap(),
            Document::new("a", "x").unwrap(),
            Document::new("b", "y").unwrap(),
            Document::new("a", "y").unwrap(),
        ];
        assert_eq!(build_inverted_index(&docs), Err(CorpusError::DuplicateFilenames(vec!["a".into(), "b".into()])));
    }

    #[test]
    fn remove_document_drops_empty_postings() {
        let docs = vec![Document::new("doc1", "alpha beta").unwrap(), Document::new("doc2", "beta").unwrap()];
        let mut idx = build_inverted_index(&docs).unwrap();
        let touched = idx.remove_document("doc1");
        assert_eq!(touched, vec![kw("alpha"), kw("beta")]);
        assert!(idx.postings(&kw("alpha")).is_none());
        assert_eq!(idx.postings(&kw("beta")), Some(&set(&["doc2"])));
    }

    #[test]
    fn from_postings_rejects_empty_sets() {
        let mut m = BTreeMap::new();
        m.insert(kw("alpha"), BTreeSet::new());
        assert!(InvertedIndex::from_postings(m).is_err());
    }
}
