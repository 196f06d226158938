//! Query-recovery attacks.
//!
//! [`fma`] is the baseline frequency matching attack driven by result sizes
//! alone. [`efma`] runs it first and then resolves the remaining tokens by
//! exact equality between the observed ciphertext file set `F_e` and the
//! plaintext posting set `F_p` from auxiliary knowledge.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{InvertedIndex, Keyword};
use crate::sse::SearchToken;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttackError {
    #[error("observation for {token} has result size {result_size} but {files} accessed files")]
    ObservationMismatch { token: SearchToken, result_size: usize, files: usize },
    #[error("no ground truth for token {0}")]
    MissingTruth(SearchToken),
    #[error("attacker knows {known} of {total} documents")]
    InvalidCoverage { known: usize, total: usize },
    #[error("auxiliary index references unknown document {0:?}")]
    UnknownAuxDocument(String),
}

/// What the attacker knows about the plaintext corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxKnowledge {
    plain_index: InvertedIndex,
    /// `None` means the attacker knows every document.
    known_docs: Option<BTreeSet<String>>,
    total_docs: usize,
}

impl AuxKnowledge {
    /// Complete knowledge of the plaintext index.
    pub fn full(plain_index: InvertedIndex) -> Self {
        let total_docs = plain_index.documents().len();
        Self { plain_index, known_docs: None, total_docs }
    }

    /// Knowledge of `known_docs` out of a corpus of `total_docs` documents;
    /// `plain_index` must only reference known documents.
    pub fn partial(
        plain_index: InvertedIndex,
        known_docs: BTreeSet<String>,
        total_docs: usize,
    ) -> Result<Self, AttackError> {
        if known_docs.len() > total_docs {
            return Err(AttackError::InvalidCoverage { known: known_docs.len(), total: total_docs });
        }
        if let Some(f) = plain_index.documents().into_iter().find(|f| !known_docs.contains(*f)) {
            return Err(AttackError::UnknownAuxDocument(f.into()));
        }
        Ok(Self { plain_index, known_docs: Some(known_docs), total_docs })
    }

    pub fn plain_index(&self) -> &InvertedIndex {
        &self.plain_index
    }

    pub fn known_docs(&self) -> Option<&BTreeSet<String>> {
        self.known_docs.as_ref()
    }

    pub fn coverage(&self) -> f64 {
        match &self.known_docs {
            None => 1.0,
            Some(_) if self.total_docs == 0 => 1.0,
            Some(k) => k.len() as f64 / self.total_docs as f64,
        }
    }

    /// `F_e` as the attacker can compare it: restricted to known documents.
    fn visible(&self, files: &BTreeSet<String>) -> BTreeSet<String> {
        match &self.known_docs {
            None => files.clone(),
            Some(k) => files.intersection(k).cloned().collect(),
        }
    }
}

/// One observed query: `L_search` plus, when traced, `L_fileAccess`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryObservation {
    token: SearchToken,
    result_size: usize,
    file_set: Option<BTreeSet<String>>,
}

impl QueryObservation {
    pub fn new(token: SearchToken, result_size: usize) -> Self {
        Self { token, result_size, file_set: None }
    }

    pub fn with_files(token: SearchToken, result_size: usize, files: BTreeSet<String>) -> Result<Self, AttackError> {
        if files.len() != result_size {
            return Err(AttackError::ObservationMismatch { token, result_size, files: files.len() });
        }
        Ok(Self { token, result_size, file_set: Some(files) })
    }

    pub fn token(&self) -> SearchToken {
        self.token
    }

    pub fn result_size(&self) -> usize {
        self.result_size
    }

    pub fn file_set(&self) -> Option<&BTreeSet<String>> {
        self.file_set.as_ref()
    }

    /// Drops the file-access leakage, leaving what FMA sees.
    pub fn without_files(&self) -> Self {
        Self::new(self.token, self.result_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchStatus {
    MatchedUniqueFrequency,
    MatchedFileSet,
    Unresolved,
}

impl MatchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchStatus::MatchedUniqueFrequency => "matched_unique_frequency",
            MatchStatus::MatchedFileSet => "matched_file_set",
            MatchStatus::Unresolved => "unresolved",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matched_unique_frequency" => Some(MatchStatus::MatchedUniqueFrequency),
            "matched_file_set" => Some(MatchStatus::MatchedFileSet),
            "unresolved" => Some(MatchStatus::Unresolved),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGuess {
    /// `None` iff the status is [`MatchStatus::Unresolved`].
    pub keyword: Option<Keyword>,
    pub status: MatchStatus,
}

impl TokenGuess {
    fn unresolved() -> Self {
        Self { keyword: None, status: MatchStatus::Unresolved }
    }

    fn matched(keyword: Keyword, status: MatchStatus) -> Self {
        Self { keyword: Some(keyword), status }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub wrong: usize,
    pub unresolved: usize,
}

impl Tally {
    pub fn total(&self) -> usize {
        self.correct + self.wrong + self.unresolved
    }
}

/// The recovered token → keyword mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackResult {
    guesses: BTreeMap<SearchToken, TokenGuess>,
}

impl AttackResult {
    pub fn guess(&self, token: &SearchToken) -> Option<&TokenGuess> {
        self.guesses.get(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SearchToken, &TokenGuess)> {
        self.guesses.iter()
    }

    pub fn len(&self) -> usize {
        self.guesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guesses.is_empty()
    }

    pub fn tally(&self, truth: &BTreeMap<SearchToken, Keyword>) -> Result<Tally, AttackError> {
        let mut t = Tally::default();
        for (token, g) in &self.guesses {
            let real = truth.get(token).ok_or(AttackError::MissingTruth(*token))?;
            match &g.keyword {
                None => t.unresolved += 1,
                Some(w) if w == real => t.correct += 1,
                Some(_) => t.wrong += 1,
            }
        }
        Ok(t)
    }
}

/// Keywords of the auxiliary index grouped by posting-set size.
pub fn build_frequency_profile(aux: &AuxKnowledge) -> BTreeMap<usize, BTreeSet<Keyword>> {
    let mut profile: BTreeMap<usize, BTreeSet<Keyword>> = BTreeMap::new();
    for (w, files) in aux.plain_index.iter() {
        profile.entry(files.len()).or_default().insert(w.clone());
    }
    profile
}

// first observation of a token wins; repeats carry no new information
fn distinct_tokens(observations: &[QueryObservation]) -> BTreeMap<SearchToken, &QueryObservation> {
    let mut out = BTreeMap::new();
    for o in observations {
        out.entry(o.token).or_insert(o);
    }
    out
}

/// Frequency matching: a token is mapped to `w` only when its result size is
/// shared by no other observed token and by no other auxiliary keyword.
pub fn fma(observations: &[QueryObservation], aux: &AuxKnowledge) -> AttackResult {
    let profile = build_frequency_profile(aux);
    let tokens = distinct_tokens(observations);
    let mut tokens_per_size: BTreeMap<usize, usize> = BTreeMap::new();
    for o in tokens.values() {
        *tokens_per_size.entry(o.result_size).or_default() += 1;
    }
    let guesses = tokens
        .iter()
        .map(|(t, o)| {
            let unique_token = tokens_per_size[&o.result_size] == 1;
            let guess = match profile.get(&o.result_size) {
                Some(cands) if unique_token && cands.len() == 1 => {
                    let w = cands.iter().next().unwrap().clone();
                    TokenGuess::matched(w, MatchStatus::MatchedUniqueFrequency)
                }
                _ => TokenGuess::unresolved(),
            };
            (*t, guess)
        })
        .collect();
    AttackResult { guesses }
}

/// FMA followed by exact file-set matching (`t_w = w if F_e = F_p`) for
/// every token FMA left unresolved.
pub fn efma(observations: &[QueryObservation], aux: &AuxKnowledge) -> AttackResult {
    let mut result = fma(observations, aux);
    let mut by_posting: BTreeMap<&BTreeSet<String>, Vec<&Keyword>> = BTreeMap::new();
    for (w, files) in aux.plain_index.iter() {
        by_posting.entry(files).or_default().push(w);
    }
    for (token, o) in distinct_tokens(observations) {
        let Some(files) = o.file_set.as_ref() else {
            continue;
        };
        let guess = result.guesses.get_mut(&token).expect("fma covers every token");
        if guess.status != MatchStatus::Unresolved {
            continue;
        }
        if let Some([w]) = by_posting.get(&aux.visible(files)).map(Vec::as_slice) {
            *guess = TokenGuess::matched((*w).clone(), MatchStatus::MatchedFileSet);
        }
    }
    result
}

/// Query-recovery accuracy: exact matches over observed tokens, unresolved
/// tokens counting as incorrect. An empty result scores 1.0.
pub fn score(result: &AttackResult, ground_truth: &BTreeMap<SearchToken, Keyword>) -> Result<f64, AttackError> {
    if result.is_empty() {
        log::warn!("scoring an attack with no observed tokens; accuracy is vacuously 1.0");
        return Ok(1.0);
    }
    let t = result.tally(ground_truth)?;
    Ok(t.correct as f64 / t.total() as f64)
}
