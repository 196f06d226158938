//! Response-revealing SSE over an inverted index.
//!
//! Tokens are a keyed PRF of the keyword. The encrypted index maps a label
//! derived from the token to a posting blob sealed under a second
//! token-derived key, so a CSP that receives `t_w` can locate and open
//! exactly one posting list. Documents are sealed with ChaCha20-Poly1305
//! under a fresh random nonce and keep their plaintext filename, which is
//! the leakage surface the trace module observes.
//!
//! Updates are not forward private; they only expose the entry counts.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand_core::CryptoRng;
use sha2::Sha256;

use crate::corpus::{validate_filename, CorpusError, Document, InvertedIndex, Keyword, Normalizer};

pub const TOKEN_LEN: usize = 16;
pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

const KEYGEN_SALT: &[u8] = b"sseleak/keygen/v1";
const TRAPDOOR_DOMAIN: &[u8] = b"sseleak/trapdoor/v1";
const LABEL_DOMAIN: &[u8] = b"sseleak/label/v1";
const POSTING_DOMAIN: &[u8] = b"sseleak/posting/v1";
const DOC_AAD_PREFIX: &[u8] = b"sseleak/doc/v1:";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SseError {
    #[error("search token collision between {first:?} and {second:?}")]
    TokenCollision { first: String, second: String },
    #[error("ciphertext failed authentication")]
    Integrity,
    #[error("malformed posting list")]
    MalformedPosting,
    #[error("malformed encrypted index: {0}")]
    MalformedIndex(&'static str),
    #[error("document {0:?} is already stored")]
    DuplicateDocument(String),
    #[error("document {0:?} is not stored")]
    UnknownDocument(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

type HmacSha256 = Hmac<Sha256>;

fn prf(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// Secret keys of the data owner, derived from a 64-bit experiment seed.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    token_key: [u8; KEY_LEN],
    enc_key: [u8; KEY_LEN],
    seed: u64,
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyMaterial").field("seed", &self.seed).finish_non_exhaustive()
    }
}

impl KeyMaterial {
    fn expand(seed: u64, info: &[u8]) -> [u8; KEY_LEN] {
        let hk = Hkdf::<Sha256>::new(Some(KEYGEN_SALT), &seed.to_le_bytes());
        let mut okm = [0u8; KEY_LEN];
        hk.expand(info, &mut okm).expect("32 bytes is a valid hkdf output");
        okm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn token_key(&self) -> &[u8; KEY_LEN] {
        &self.token_key
    }

    pub fn enc_key(&self) -> &[u8; KEY_LEN] {
        &self.enc_key
    }

    /// Seed for a nonce-generating CSPRNG, so that a whole ingestion run is
    /// reproducible from the experiment seed.
    pub fn nonce_seed(&self) -> [u8; KEY_LEN] {
        Self::expand(self.seed, b"nonce-stream")
    }
}

pub fn keygen(seed: u64) -> KeyMaterial {
    KeyMaterial {
        token_key: KeyMaterial::expand(seed, b"token-prf"),
        enc_key: KeyMaterial::expand(seed, b"document-aead"),
        seed,
    }
}

/// The 16-byte search token `t_w`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SearchToken([u8; TOKEN_LEN]);

impl SearchToken {
    pub const fn from_bytes(bytes: [u8; TOKEN_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; TOKEN_LEN];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Self(out))
    }

    /// Lookup label of this token's entry in the encrypted index.
    pub fn label(&self) -> IndexLabel {
        let full = prf(&self.0, &[LABEL_DOMAIN]);
        let mut out = [0u8; TOKEN_LEN];
        out.copy_from_slice(&full[..TOKEN_LEN]);
        IndexLabel(out)
    }

    fn posting_key(&self) -> [u8; KEY_LEN] {
        prf(&self.0, &[POSTING_DOMAIN])
    }
}

impl fmt::Debug for SearchToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SearchToken({})", self.to_hex())
    }
}

impl fmt::Display for SearchToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn trapdoor(keys: &KeyMaterial, w: &Keyword) -> SearchToken {
    let full = prf(&keys.token_key, &[TRAPDOOR_DOMAIN, w.as_str().as_bytes()]);
    let mut out = [0u8; TOKEN_LEN];
    out.copy_from_slice(&full[..TOKEN_LEN]);
    SearchToken(out)
}

/// Key of an encrypted index record, as stored in `index.bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexLabel([u8; TOKEN_LEN]);

impl IndexLabel {
    pub const fn from_bytes(bytes: [u8; TOKEN_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }
}

fn seal<R: CryptoRng + ?Sized>(key: &[u8; KEY_LEN], aad: &[u8], msg: &[u8], rng: &mut R) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload { msg, aad })
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

fn open(key: &[u8; KEY_LEN], aad: &[u8], blob: &[u8]) -> Result<Vec<u8>, SseError> {
    if blob.len() < NONCE_LEN + TAG_LEN {
        return Err(SseError::Integrity);
    }
    let (nonce, ct) = blob.split_at(NONCE_LEN);
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .map_err(|_| SseError::Integrity)
}

// posting plaintext: u32 LE count, then {u16 LE len, utf-8 name} per file
fn encode_posting(files: &BTreeSet<String>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(files.len() as u32).to_le_bytes());
    for f in files {
        out.extend_from_slice(&(f.len() as u16).to_le_bytes());
        out.extend_from_slice(f.as_bytes());
    }
    out
}

fn decode_posting(mut bytes: &[u8]) -> Result<BTreeSet<String>, SseError> {
    fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], SseError> {
        if bytes.len() < n {
            return Err(SseError::MalformedPosting);
        }
        let (head, tail) = bytes.split_at(n);
        *bytes = tail;
        Ok(head)
    }
    let count = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().unwrap());
    let mut files = BTreeSet::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(take(&mut bytes, 2)?.try_into().unwrap()) as usize;
        let name = core::str::from_utf8(take(&mut bytes, len)?).map_err(|_| SseError::MalformedPosting)?;
        validate_filename(name).map_err(|_| SseError::MalformedPosting)?;
        files.insert(name.to_owned());
    }
    if !bytes.is_empty() {
        return Err(SseError::MalformedPosting);
    }
    Ok(files)
}

fn seal_posting<R: CryptoRng + ?Sized>(
    token: &SearchToken,
    files: &BTreeSet<String>,
    rng: &mut R,
) -> (IndexLabel, Vec<u8>) {
    let label = token.label();
    let blob = seal(&token.posting_key(), label.as_bytes(), &encode_posting(files), rng);
    (label, blob)
}

/// A single change to the encrypted index produced by an update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexUpdate {
    Put { label: IndexLabel, blob: Vec<u8> },
    Remove { label: IndexLabel },
}

/// The encrypted index held by the CSP.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncryptedIndex {
    entries: BTreeMap<IndexLabel, Vec<u8>>,
}

impl EncryptedIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &IndexLabel> {
        self.entries.keys()
    }

    /// Decrypted posting set for `token`, or `None` if no entry matches.
    pub fn lookup(&self, token: &SearchToken) -> Result<Option<BTreeSet<String>>, SseError> {
        let label = token.label();
        match self.entries.get(&label) {
            None => Ok(None),
            Some(blob) => {
                let plain = open(&token.posting_key(), label.as_bytes(), blob)?;
                decode_posting(&plain).map(Some)
            }
        }
    }

    pub fn apply(&mut self, updates: &[IndexUpdate]) -> LeakageRecord {
        for u in updates {
            match u {
                IndexUpdate::Put { label, blob } => {
                    self.entries.insert(*label, blob.clone());
                }
                IndexUpdate::Remove { label } => {
                    self.entries.remove(label);
                }
            }
        }
        LeakageRecord::new(OpKind::Update, updates.len())
    }

    /// `index.bin` encoding: records sorted by label, each
    /// `label(16) || blob_len(u32 LE) || blob`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (label, blob) in &self.entries {
            out.extend_from_slice(label.as_bytes());
            out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            out.extend_from_slice(blob);
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, SseError> {
        let mut entries = BTreeMap::new();
        while !bytes.is_empty() {
            if bytes.len() < TOKEN_LEN + 4 {
                return Err(SseError::MalformedIndex("truncated record header"));
            }
            let label = IndexLabel(bytes[..TOKEN_LEN].try_into().unwrap());
            let len = u32::from_le_bytes(bytes[TOKEN_LEN..TOKEN_LEN + 4].try_into().unwrap()) as usize;
            bytes = &bytes[TOKEN_LEN + 4..];
            if bytes.len() < len {
                return Err(SseError::MalformedIndex("truncated record blob"));
            }
            if entries.insert(label, bytes[..len].to_vec()).is_some() {
                return Err(SseError::MalformedIndex("duplicate label"));
            }
            bytes = &bytes[len..];
        }
        Ok(Self { entries })
    }
}

pub fn encrypt_index<R: CryptoRng + ?Sized>(
    keys: &KeyMaterial,
    idx: &InvertedIndex,
    rng: &mut R,
) -> Result<EncryptedIndex, SseError> {
    let mut owner_of: BTreeMap<IndexLabel, &Keyword> = BTreeMap::new();
    let mut tokens: BTreeMap<SearchToken, &Keyword> = BTreeMap::new();
    let mut entries = BTreeMap::new();
    for (w, files) in idx.iter() {
        let token = trapdoor(keys, w);
        if let Some(prev) = tokens.insert(token, w) {
            return Err(SseError::TokenCollision { first: prev.as_str().to_owned(), second: w.as_str().to_owned() });
        }
        let (label, blob) = seal_posting(&token, files, rng);
        if let Some(prev) = owner_of.insert(label, w) {
            return Err(SseError::TokenCollision { first: prev.as_str().to_owned(), second: w.as_str().to_owned() });
        }
        entries.insert(label, blob);
    }
    Ok(EncryptedIndex { entries })
}

/// An encrypted document. The filename is the plaintext filename, unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextDocument {
    filename: String,
    blob: Vec<u8>,
}

impl CiphertextDocument {
    pub fn new(filename: impl Into<String>, blob: Vec<u8>) -> Result<Self, SseError> {
        let filename = filename.into();
        validate_filename(&filename)?;
        Ok(Self { filename, blob })
    }

    pub fn filename(&self) -> &str {
        &self.filename
    }

    pub fn blob(&self) -> &[u8] {
        &self.blob
    }

    pub fn into_parts(self) -> (String, Vec<u8>) {
        (self.filename, self.blob)
    }
}

fn doc_aad(filename: &str) -> Vec<u8> {
    let mut aad = DOC_AAD_PREFIX.to_vec();
    aad.extend_from_slice(filename.as_bytes());
    aad
}

pub fn encrypt_document<R: CryptoRng + ?Sized>(keys: &KeyMaterial, d: &Document, rng: &mut R) -> CiphertextDocument {
    CiphertextDocument {
        filename: d.filename().to_owned(),
        blob: seal(&keys.enc_key, &doc_aad(d.filename()), d.body(), rng),
    }
}

pub fn decrypt_document(keys: &KeyMaterial, c: &CiphertextDocument) -> Result<Document, SseError> {
    let body = open(&keys.enc_key, &doc_aad(&c.filename), &c.blob)?;
    Ok(Document::new(c.filename.clone(), body)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Add,
    Update,
    Delete,
    Search,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Update => "update",
            OpKind::Delete => "delete",
            OpKind::Search => "search",
        }
    }
}

/// What one operation leaks to the CSP, as a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeakageRecord {
    pub kind: OpKind,
    pub magnitude: usize,
}

impl LeakageRecord {
    pub fn new(kind: OpKind, magnitude: usize) -> Self {
        Self { kind, magnitude }
    }

    pub fn search(result_size: usize) -> Self {
        Self::new(OpKind::Search, result_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddOutcome {
    pub ciphertext: CiphertextDocument,
    pub updates: Vec<IndexUpdate>,
    pub leakage: LeakageRecord,
}

/// Sent to the CSP to delete a document and rewrite its index entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeletionToken {
    pub filename: String,
    pub updates: Vec<IndexUpdate>,
}

/// Client-side state: keys plus the local plaintext inverted index needed to
/// re-encrypt posting lists on update.
#[derive(Debug, Clone)]
pub struct DataOwner {
    keys: KeyMaterial,
    normalizer: Normalizer,
    index: InvertedIndex,
    stored: BTreeSet<String>,
}

impl DataOwner {
    pub fn new(keys: KeyMaterial, normalizer: Normalizer) -> Self {
        Self { keys, normalizer, index: InvertedIndex::default(), stored: BTreeSet::new() }
    }

    /// Builds and encrypts the initial index and documents.
    pub fn outsource<R: CryptoRng + ?Sized>(
        keys: KeyMaterial,
        normalizer: Normalizer,
        docs: &[Document],
        rng: &mut R,
    ) -> Result<(Self, EncryptedIndex, Vec<CiphertextDocument>), SseError> {
        let index = normalizer.build_index(docs)?;
        let enc = encrypt_index(&keys, &index, rng)?;
        let cts = docs.iter().map(|d| encrypt_document(&keys, d, rng)).collect();
        let owner = Self { keys, normalizer, index, stored: docs.iter().map(|d| d.filename().to_owned()).collect() };
        Ok((owner, enc, cts))
    }

    pub fn keys(&self) -> &KeyMaterial {
        &self.keys
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn is_stored(&self, filename: &str) -> bool {
        self.stored.contains(filename)
    }

    pub fn token(&self, w: &Keyword) -> SearchToken {
        trapdoor(&self.keys, w)
    }

    pub fn add_document<R: CryptoRng + ?Sized>(&mut self, d: &Document, rng: &mut R) -> Result<AddOutcome, SseError> {
        let name = d.filename();
        if !self.stored.insert(name.to_owned()) {
            return Err(SseError::DuplicateDocument(name.to_owned()));
        }
        let keywords = self.normalizer.extract_keywords(d);
        let leakage = LeakageRecord::new(OpKind::Add, keywords.len());
        self.index.insert_document(name, keywords.iter().cloned());
        let updates = keywords
            .iter()
            .map(|w| {
                let files = self.index.postings(w).expect("just inserted");
                let (label, blob) = seal_posting(&trapdoor(&self.keys, w), files, rng);
                IndexUpdate::Put { label, blob }
            })
            .collect();
        Ok(AddOutcome { ciphertext: encrypt_document(&self.keys, d, rng), updates, leakage })
    }

    pub fn delete_document<R: CryptoRng + ?Sized>(
        &mut self,
        filename: &str,
        rng: &mut R,
    ) -> Result<(DeletionToken, LeakageRecord), SseError> {
        if !self.stored.remove(filename) {
            return Err(SseError::UnknownDocument(filename.to_owned()));
        }
        let touched = self.index.remove_document(filename);
        let updates = touched
            .iter()
            .map(|w| {
                let token = trapdoor(&self.keys, w);
                match self.index.postings(w) {
                    Some(files) => {
                        let (label, blob) = seal_posting(&token, files, rng);
                        IndexUpdate::Put { label, blob }
                    }
                    None => IndexUpdate::Remove { label: token.label() },
                }
            })
            .collect();
        let leakage = LeakageRecord::new(OpKind::Delete, touched.len());
        Ok((DeletionToken { filename: filename.to_owned(), updates }, leakage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn kw(s: &str) -> Keyword {
        Keyword::new(s).unwrap()
    }

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(1)
    }

    fn example_docs() -> Vec<Document> {
        vec![
            Document::new("doc1", "invoice").unwrap(),
            Document::new("doc2", "contract").unwrap(),
            Document::new("doc3", "invoice").unwrap(),
            Document::new("doc4", "contract").unwrap(),
            Document::new("doc7", "invoice").unwrap(),
        ]
    }

    #[test]
    fn keygen_is_deterministic_and_seed_sensitive() {
        assert_eq!(keygen(42), keygen(42));
        assert_ne!(keygen(42).token_key(), keygen(43).token_key());
        let k = keygen(42);
        assert_ne!(k.token_key(), k.enc_key());
        assert_ne!(&k.nonce_seed(), k.enc_key());
    }

    #[test]
    fn key_debug_is_redacted() {
        let s = alloc::format!("{:?}", keygen(1));
        assert!(s.contains("seed: 1"));
        assert!(!s.contains("token_key"));
    }

    #[test]
    fn trapdoor_determinism_and_separation() {
        let k = keygen(9);
        assert_eq!(trapdoor(&k, &kw("invoice")), trapdoor(&k, &kw("invoice")));
        assert_ne!(trapdoor(&k, &kw("invoice")), trapdoor(&k, &kw("contract")));
        assert_ne!(trapdoor(&k, &kw("invoice")), trapdoor(&keygen(10), &kw("invoice")));
    }

    #[test]
    fn token_hex_round_trip() {
        let t = trapdoor(&keygen(3), &kw("budget"));
        assert_eq!(SearchToken::from_hex(&t.to_hex()), Some(t));
        assert_eq!(SearchToken::from_hex("abcd"), None);
    }

    #[test]
    fn encrypted_index_lookup() {
        let k = keygen(5);
        let idx = crate::corpus::build_inverted_index(&example_docs()).unwrap();
        let enc = encrypt_index(&k, &idx, &mut rng()).unwrap();
        assert_eq!(enc.len(), 2);
        let got = enc.lookup(&trapdoor(&k, &kw("invoice"))).unwrap().unwrap();
        let want: BTreeSet<String> = ["doc1", "doc3", "doc7"].iter().map(|s| (*s).into()).collect();
        assert_eq!(got, want);
        assert_eq!(enc.lookup(&trapdoor(&k, &kw("budget"))).unwrap(), None);
    }

    #[test]
    fn random_tokens_never_hit() {
        let k = keygen(5);
        let idx = crate::corpus::build_inverted_index(&example_docs()).unwrap();
        let enc = encrypt_index(&k, &idx, &mut rng()).unwrap();
        let mut r = ChaCha20Rng::seed_from_u64(77);
        let hits = (0..10_000)
            .filter(|_| {
                let mut b = [0u8; TOKEN_LEN];
                r.fill_bytes(&mut b);
                enc.lookup(&SearchToken::from_bytes(b)).unwrap().is_some()
            })
            .count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn index_does_not_store_tokens_or_keywords() {
        let k = keygen(5);
        let idx = crate::corpus::build_inverted_index(&example_docs()).unwrap();
        let bytes = encrypt_index(&k, &idx, &mut rng()).unwrap().to_bytes();
        let t = trapdoor(&k, &kw("invoice"));
        assert!(!bytes.windows(TOKEN_LEN).any(|w| w == t.as_bytes()));
        assert!(!bytes.windows(7).any(|w| w == b"invoice"));
        assert!(!bytes.windows(4).any(|w| w == b"doc1"));
    }

    #[test]
    fn index_bytes_round_trip_and_truncation() {
        let k = keygen(5);
        let idx = crate::corpus::build_inverted_index(&example_docs()).unwrap();
        let enc = encrypt_index(&k, &idx, &mut rng()).unwrap();
        let bytes = enc.to_bytes();
        assert_eq!(EncryptedIndex::from_bytes(&bytes).unwrap(), enc);
        assert!(EncryptedIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(EncryptedIndex::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn document_round_trip_and_fresh_nonce() {
        let k = keygen(11);
        let d = Document::new("mail/42", "quarterly budget").unwrap();
        let mut r = rng();
        let c1 = encrypt_document(&k, &d, &mut r);
        let c2 = encrypt_document(&k, &d, &mut r);
        assert_eq!(c1.filename(), "mail/42");
        assert_eq!(c2.filename(), "mail/42");
        assert_ne!(c1.blob(), c2.blob());
        assert_eq!(decrypt_document(&k, &c1).unwrap(), d);
    }

    #[test]
    fn empty_document_round_trip() {
        let k = keygen(11);
        let d = Document::new("empty", "").unwrap();
        let c = encrypt_document(&k, &d, &mut rng());
        assert_eq!(c.blob().len(), NONCE_LEN + TAG_LEN);
        assert_eq!(decrypt_document(&k, &c).unwrap(), d);
    }

    #[test]
    fn tamper_wrong_key_and_rename_are_rejected() {
        let k = keygen(11);
        let d = Document::new("doc1", "invoice").unwrap();
        let c = encrypt_document(&k, &d, &mut rng());
        for i in 0..c.blob().len() {
            let mut blob = c.blob().to_vec();
            blob[i] ^= 0x01;
            let t = CiphertextDocument::new("doc1", blob).unwrap();
            assert_eq!(decrypt_document(&k, &t), Err(SseError::Integrity));
        }
        assert_eq!(decrypt_document(&keygen(12), &c), Err(SseError::Integrity));
        let renamed = CiphertextDocument::new("doc2", c.blob().to_vec()).unwrap();
        assert_eq!(decrypt_document(&k, &renamed), Err(SseError::Integrity));
        let short = CiphertextDocument::new("doc1", vec![0; 5]).unwrap();
        assert_eq!(decrypt_document(&k, &short), Err(SseError::Integrity));
    }

    #[test]
    fn add_leaks_keyword_count_and_is_searchable() {
        let mut r = rng();
        let (mut owner, mut enc, _) =
            DataOwner::outsource(keygen(2), Normalizer::default(), &example_docs(), &mut r).unwrap();
        let d = Document::new("doc9", "alpha beta gamma delta invoice").unwrap();
        let out = owner.add_document(&d, &mut r).unwrap();
        assert_eq!(out.leakage, LeakageRecord::new(OpKind::Add, 5));
        assert_eq!(enc.apply(&out.updates), LeakageRecord::new(OpKind::Update, 5));
        for w in ["alpha", "beta", "gamma", "delta", "invoice"] {
            let files = enc.lookup(&owner.token(&kw(w))).unwrap().unwrap();
            assert!(files.contains("doc9"), "{w}");
        }
        assert_eq!(enc.lookup(&owner.token(&kw("invoice"))).unwrap().unwrap().len(), 4);
        assert_eq!(owner.add_document(&d, &mut r), Err(SseError::DuplicateDocument("doc9".into())));
    }

    #[test]
    fn add_without_keywords() {
        let mut owner = DataOwner::new(keygen(2), Normalizer::default());
        let d = Document::new("blank", "a an of").unwrap();
        let out = owner.add_document(&d, &mut rng()).unwrap();
        assert_eq!(out.leakage.magnitude, 0);
        assert!(out.updates.is_empty());
        let (tok, leak) = owner.delete_document("blank", &mut rng()).unwrap();
        assert_eq!(leak.magnitude, 0);
        assert!(tok.updates.is_empty());
    }

    #[test]
    fn delete_then_readd() {
        let mut r = rng();
        let docs = vec![Document::new("a", "alpha beta gamma").unwrap(), Document::new("b", "alpha").unwrap()];
        let (mut owner, mut enc, _) = DataOwner::outsource(keygen(4), Normalizer::default(), &docs, &mut r).unwrap();
        let (tok, leak) = owner.delete_document("a", &mut r).unwrap();
        assert_eq!(leak, LeakageRecord::new(OpKind::Delete, 3));
        assert_eq!(tok.filename, "a");
        enc.apply(&tok.updates);
        assert_eq!(enc.len(), 1);
        let alpha = enc.lookup(&owner.token(&kw("alpha"))).unwrap().unwrap();
        assert!(!alpha.contains("a"));
        assert_eq!(enc.lookup(&owner.token(&kw("beta"))).unwrap(), None);
        assert_eq!(owner.delete_document("a", &mut r).unwrap_err(), SseError::UnknownDocument("a".into()));
        let out = owner.add_document(&docs[0], &mut r).unwrap();
        enc.apply(&out.updates);
        assert!(enc.lookup(&owner.token(&kw("beta"))).unwrap().unwrap().contains("a"));
    }

    #[test]
    fn posting_codec_rejects_garbage() {
        assert!(decode_posting(&[1, 0, 0, 0, 5, 0, b'a']).is_err());
        assert!(decode_posting(&[0, 0, 0, 0, 9]).is_err());
        assert!(decode_posting(&[1, 0, 0, 0, 2, 0, b'.', b'.']).is_err());
        let set: BTreeSet<String> = ["x/y".into(), "z".into()].into_iter().collect();
        assert_eq!(decode_posting(&encode_posting(&set)).unwrap(), set);
    }
}
