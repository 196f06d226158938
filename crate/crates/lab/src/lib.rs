//! Std companion of `sseleak-core`: corpus loading, the on-disk encrypted
//! store, the CSP socket server and client, trace providers, file formats
//! and the experiment runner behind the `sseleak` CLI.

pub mod client;
pub mod clock;
pub mod corpus_fs;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod providers;
pub mod server;
pub mod store;
pub mod tiecorpus;

pub use client::CspClient;
pub use corpus_fs::{load_corpus, LoadedCorpus};
pub use error::{LabError, Result};
pub use experiment::{ingest, run_experiment, ExperimentConfig, ExperimentOutcome, ExperimentReport, Provider};
pub use providers::{ingest_feed, FeedReport, SimulatedProvider};
pub use server::{Csp, QueryRecord, ServerHandle, TraceHook};
pub use store::Store;
pub use tiecorpus::{make_tie_corpus, write_tie_corpus, TieCorpus, TieSpec};
