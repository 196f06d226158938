//! Property tests for the index, the scheme and the attacks over random
//! small corpora.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sseleak_core::{
    efma, fma, keygen, score, trapdoor, AuxKnowledge, DataOwner, Document, InvertedIndex, Keyword, MatchStatus,
    Normalizer, QueryObservation, SearchToken,
};

const VOCAB: &[&str] = &[
    "invoice", "contract", "budget", "meeting", "energy", "trading", "gas", "power", "deal", "risk", "price", "market",
    "credit", "legal", "report", "schedule",
];

fn arb_corpus() -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec(prop::collection::vec(0..VOCAB.len(), 0..8), 1..20).prop_map(|bodies| {
        bodies
            .into_iter()
            .enumerate()
            .map(|(i, words)| {
                let body: Vec<&str> = words.into_iter().map(|w| VOCAB[w]).collect();
                Document::new(format!("doc{i:02}"), body.join(" ")).unwrap()
            })
            .collect()
    })
}

/// Independent recount: whitespace split over the known vocabulary.
fn brute_postings(docs: &[Document]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in docs {
        for w in std::str::from_utf8(d.body()).unwrap().split(' ').filter(|w| !w.is_empty()) {
            out.entry(w.to_owned()).or_default().insert(d.filename().to_owned());
        }
    }
    out
}

fn plain(idx: &InvertedIndex) -> BTreeMap<String, BTreeSet<String>> {
    idx.iter().map(|(w, f)| (w.as_str().to_owned(), f.clone())).collect()
}

fn observations(owner: &DataOwner, queries: &[Keyword]) -> (Vec<QueryObservation>, BTreeMap<SearchToken, Keyword>) {
    let mut obs = Vec::new();
    let mut truth = BTreeMap::new();
    for w in queries {
        let t = owner.token(w);
        let files = owner.index().postings(w).cloned().unwrap_or_default();
        obs.push(QueryObservation::with_files(t, files.len(), files).unwrap());
        truth.insert(t, w.clone());
    }
    (obs, truth)
}

proptest! {
    #[test]
    fn index_matches_bruteforce(docs in arb_corpus()) {
        let idx = Normalizer::default().build_index(&docs).unwrap();
        prop_assert_eq!(plain(&idx), brute_postings(&docs));
        prop_assert_eq!(Normalizer::default().build_index(&docs).unwrap(), idx);
    }

    #[test]
    fn search_returns_exact_postings(docs in arb_corpus(), seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (owner, enc, _) = DataOwner::outsource(keygen(seed), Normalizer::default(), &docs, &mut rng).unwrap();
        prop_assert_eq!(enc.len(), owner.index().len());
        let tokens: BTreeSet<SearchToken> = owner.index().keywords().map(|w| owner.token(w)).collect();
        prop_assert_eq!(tokens.len(), owner.index().len());
        for (w, files) in owner.index().iter() {
            let got = enc.lookup(&trapdoor(owner.keys(), w)).unwrap();
            prop_assert_eq!(got.as_ref(), Some(files));
        }
    }

    #[test]
    fn efma_dominates_fma(docs in arb_corpus(), pick in prop::collection::vec(any::<bool>(), VOCAB.len())) {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (owner, _, _) = DataOwner::outsource(keygen(1), Normalizer::default(), &docs, &mut rng).unwrap();
        let queries: Vec<Keyword> = owner.index().keywords().zip(&pick).filter(|(_, p)| **p).map(|(w, _)| w.clone()).collect();
        let (obs, truth) = observations(&owner, &queries);
        let aux = AuxKnowledge::full(owner.index().clone());
        let base = fma(&obs, &aux);
        let enhanced = efma(&obs, &aux);
        prop_assert!(score(&enhanced, &truth).unwrap() >= score(&base, &truth).unwrap());

        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, f) in owner.index().iter() {
            *sizes.entry(f.len()).or_default() += 1;
        }
        for (t, g) in base.iter() {
            let w = &truth[t];
            if sizes[&owner.index().postings(w).unwrap().len()] == 1 {
                prop_assert_eq!(g.status, MatchStatus::MatchedUniqueFrequency);
                prop_assert_eq!(enhanced.guess(t), Some(g));
            }
        }

        let distinct: BTreeSet<_> = owner.index().iter().map(|(_, f)| f).collect();
        if distinct.len() == owner.index().len() {
            prop_assert_eq!(score(&enhanced, &truth).unwrap(), 1.0);
        }
        prop_assert_eq!(efma(&obs, &aux), enhanced);
    }
}
