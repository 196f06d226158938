//! Core of the `sseleak` laboratory: a minimal response-revealing searchable
//! symmetric encryption scheme, its formal leakage, the CSP wire format, the
//! file-access trace correlator and the frequency-matching query-recovery
//! attacks (plain and file-access enhanced).
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, sockets or the clock lives in the `sseleak-lab` companion
//! crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attacks;
pub mod corpus;
pub mod sse;
pub mod trace;
pub mod wire;

pub use attacks::{
    build_frequency_profile, efma, fma, score, AttackError, AttackResult, AuxKnowledge, MatchStatus, QueryObservation,
    Tally, TokenGuess,
};
pub use corpus::{build_inverted_index, extract_keywords, CorpusError, Document, InvertedIndex, Keyword, Normalizer};
pub use sse::{
    decrypt_document, encrypt_document, encrypt_index, keygen, trapdoor, AddOutcome, CiphertextDocument, DataOwner,
    DeletionToken, EncryptedIndex, IndexLabel, IndexUpdate, KeyMaterial, LeakageRecord, OpKind, SearchToken, SseError,
};
pub use trace::{
    correlate, AccessOp, Correlation, FileAccessEvent, MarkerPhase, ObservedFileSet, QueryId, QueryMarker,
    QueryTraceWindow, ReorderBuffer, StoreScope, TraceError, DEFAULT_REORDER_TOLERANCE_NS,
};
pub use wire::{Frame, FrameError, SearchResponse};
