//! Experiment configuration and the end-to-end run: ingest, serve, query,
//! trace, correlate, attack, report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sseleak_core::trace::windows_from_markers;
use sseleak_core::{
    correlate, decrypt_document, efma, fma, keygen, score, AttackResult, AuxKnowledge, DataOwner, Document,
    InvertedIndex, Keyword, LeakageRecord, Normalizer, OpKind, QueryId, QueryObservation, SearchToken, Tally,
    DEFAULT_REORDER_TOLERANCE_NS,
};

use crate::client::CspClient;
use crate::corpus_fs::load_corpus;
use crate::error::{LabError, Result};
use crate::formats::{
    index_to_json, truth_to_file, write_file, write_json, AttackResultFile, ObservationEntry, TallyEntry,
};
use crate::providers::{ingest_feed_file, syscall_supported, SimulatedProvider};
use crate::server::{self, Csp};
use crate::store::Store;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Simulated,
    Syscall,
}

fn full_coverage() -> f64 {
    1.0
}

fn default_probe_settle_ms() -> u64 {
    200
}

/// TOML experiment description. Relative paths are resolved against the
/// directory of the file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Issued in order; empty means every keyword of the index.
    #[serde(default)]
    pub query_keywords: Vec<String>,
    #[serde(default)]
    pub provider: Provider,
    #[serde(default = "full_coverage")]
    pub attacker_coverage: f64,
    pub output_dir: PathBuf,
    /// JSON-lines feed written by the kernel probe (syscall provider).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_feed: Option<PathBuf>,
    /// Time the probe is given to flush after the last query.
    #[serde(default = "default_probe_settle_ms")]
    pub probe_settle_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_keyword_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus_dir: corpus_dir.into(),
            seed: 0,
            query_keywords: Vec::new(),
            provider: Provider::Simulated,
            attacker_coverage: 1.0,
            output_dir: output_dir.into(),
            probe_feed: None,
            probe_settle_ms: default_probe_settle_ms(),
            min_keyword_len: None,
            stopwords: None,
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        for p in [&mut cfg.corpus_dir, &mut cfg.output_dir] {
            *p = base_dir.join(&*p);
        }
        if let Some(p) = &mut cfg.probe_feed {
            *p = base_dir.join(&*p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.attacker_coverage;
        if !(c > 0.0 && c <= 1.0) {
            return Err(LabError::Config(format!("attacker_coverage must be in (0, 1], got {c}")));
        }
        if self.min_keyword_len == Some(0) {
            return Err(LabError::Config("min_keyword_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn normalizer(&self) -> Normalizer {
        let d = Normalizer::default();
        let min_len = self.min_keyword_len.unwrap_or(d.min_len());
        match &self.stopwords {
            Some(words) => Normalizer::new(min_len, words.iter().map(String::as_str)),
            None => Normalizer::new(min_len, d.stopwords().iter().map(String::as_str)),
        }
    }

    fn queries(&self, index: &InvertedIndex) -> Result<Vec<Keyword>> {
        if self.query_keywords.is_empty() {
            return Ok(index.keywords().cloned().collect());
        }
        self.query_keywords
            .iter()
            .map(|raw| {
                let w = Keyword::new(raw.clone())
                    .map_err(|_| LabError::Config(format!("query keyword {raw:?} is not normalized")))?;
                if index.postings(&w).is_none() {
                    return Err(LabError::Config(format!("query keyword {raw:?} is not in the index")));
                }
                Ok(w)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub keywords: usize,
    pub skipped: usize,
}

pub struct Ingested {
    pub owner: DataOwner,
    pub store: Store,
    pub documents: Vec<Document>,
    pub summary: IngestSummary,
}

/// Loads `corpus_dir`, encrypts it under `keygen(seed)` and writes
/// `<out>/store` plus the plaintext dump `<out>/index.json`. Nonces come
/// from a generator seeded by the key material, so the store is a pure
/// function of corpus and seed.
pub fn ingest(corpus_dir: &Path, out: &Path, seed: u64, normalizer: Normalizer) -> Result<Ingested> {
    let corpus = load_corpus(corpus_dir)?;
    if corpus.documents.is_empty() {
        return Err(LabError::EmptyCorpus);
    }
    let keys = keygen(seed);
    let mut rng = ChaCha20Rng::from_seed(keys.nonce_seed());
    let (owner, enc, cts) = DataOwner::outsource(keys, normalizer, &corpus.documents, &mut rng)?;
    let store = Store::create(&out.join("store"), &enc, &cts)?;
    write_file(&out.join("index.json"), index_to_json(owner.index()).as_bytes())?;
    let summary = IngestSummary {
        documents: corpus.documents.len(),
        keywords: owner.index().len(),
        skipped: corpus.skipped.len(),
    };
    info!("ingested {} documents, {} keywords, {} skipped", summary.documents, summary.keywords, summary.skipped);
    Ok(Ingested { owner, store, documents: corpus.documents, summary })
}

/// Attacker knowledge at `coverage`: a seeded sample of the documents,
/// restricted index over that sample.
pub fn aux_knowledge(truth: &InvertedIndex, all_docs: &[String], coverage: f64, seed: u64) -> Result<AuxKnowledge> {
    if coverage >= 1.0 {
        return Ok(AuxKnowledge::full(truth.clone()));
    }
    let mut docs = all_docs.to_vec();
    docs.sort();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    docs.shuffle(&mut rng);
    let n = ((coverage * docs.len() as f64).ceil() as usize).clamp(1, docs.len().max(1));
    let known: BTreeSet<String> = docs.into_iter().take(n).collect();
    Ok(AuxKnowledge::partial(truth.restricted_to(&known), known, all_docs.len())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub guess: Option<String>,
    pub status: String,
    pub correct: bool,
}

/// Per-query row of the report (the per-token outcome plot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRow {
    pub label: String,
    pub query_id: u64,
    pub token: String,
    pub keyword: String,
    pub result_size: usize,
    pub observed_files: Vec<String>,
    pub fma: AttackOutcome,
    pub efma: AttackOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPair {
    pub fma: f64,
    pub efma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyPair {
    pub fma: TallyEntry,
    pub efma: TallyEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageSummary {
    pub search_queries: usize,
    /// `L_search` per query, in query order.
    pub search_result_sizes: Vec<usize>,
    pub search_total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    /// Observed file set = CSP response = plaintext postings, every query.
    pub file_access_fidelity: bool,
    /// Result size = |observed set| = posting size, every query.
    pub pipeline_consistent: bool,
    pub violations: Vec<String>,
    pub trace_events: usize,
    pub trace_noise_events: usize,
    /// Syscall runs only: whether the probe saw what the in-process hook saw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_equivalent: Option<bool>,
}

/// `report.json`. Contains nothing that varies between runs of the same
/// configuration; timings go to `runtime.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub provider: Provider,
    pub attacker_coverage: f64,
    pub documents: usize,
    pub keywords: usize,
    pub queries: usize,
    pub accuracy: AccuracyPair,
    pub tally: TallyPair,
    pub tokens: Vec<TokenRow>,
    pub leakage: LeakageSummary,
    pub checks: Checks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub ingest_ms: f64,
    pub queries_ms: f64,
    pub trace_ms: f64,
    pub attacks_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub runtime: RuntimeStats,
    pub ground_truth: InvertedIndex,
    pub observations: Vec<QueryObservation>,
    pub truth: BTreeMap<SearchToken, Keyword>,
    pub fma: AttackResult,
    pub efma: AttackResult,
    pub leakage_log: Vec<LeakageRecord>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    label: &'a str,
    token: &'a str,
    keyword: &'a str,
    result_size: usize,
    fma_guess: &'a str,
    fma_status: &'a str,
    fma_correct: bool,
    efma_guess: &'a str,
    efma_status: &'a str,
    efma_correct: bool,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn outcome(result: &AttackResult, token: &SearchToken, truth: &Keyword) -> AttackOutcome {
    let g = result.guess(token).expect("attack covers every observed token");
    AttackOutcome {
        guess: g.keyword.as_ref().map(|w| w.as_str().to_owned()),
        status: g.status.as_str().to_owned(),
        correct: g.keyword.as_ref() == Some(truth),
    }
}

struct Issued {
    keyword: Keyword,
    token: SearchToken,
    query_id: QueryId,
    returned: BTreeSet<String>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if cfg.provider == Provider::Syscall {
        syscall_supported()?;
        let Some(feed) = &cfg.probe_feed else {
            return Err(LabError::ProviderUnavailable(
                "syscall provider selected but no probe_feed configured; start the kernel probe or use --provider simulated"
                    .into(),
            ));
        };
        if !feed.exists() {
            return Err(LabError::ProviderUnavailable(format!(
                "probe feed {} does not exist; start the kernel probe or use --provider simulated",
                feed.display()
            )));
        }
    }
    let started = Instant::now();
    let out = &cfg.output_dir;

    let ing = ingest(&cfg.corpus_dir, out, cfg.seed, cfg.normalizer())?;
    let ground = ing.owner.index().clone();
    let queries = cfg.queries(&ground)?;
    let ingest_done = Instant::now();

    let trace_dir = out.join("trace");
    let sim = Arc::new(SimulatedProvider::with_archive(&trace_dir)?);
    let csp = Arc::new(Csp::open(ing.store.clone())?.with_hook(sim.clone()));
    let handle = server::spawn(Arc::clone(&csp), "127.0.0.1:0")?;
    let mut client = CspClient::connect(handle.local_addr())?;
    let mut issued = Vec::with_capacity(queries.len());
    for w in &queries {
        let token = ing.owner.token(w);
        let resp = client.search(&token)?;
        for c in &resp.ciphertexts {
            decrypt_document(ing.owner.keys(), c)?;
        }
        issued.push(Issued {
            keyword: w.clone(),
            token,
            query_id: resp.query_id,
            returned: resp.filenames().map(str::to_owned).collect(),
        });
    }
    drop(client);
    handle.shutdown();
    let queries_done = Instant::now();

    let log = csp.query_log();
    let by_id: BTreeMap<QueryId, _> = log.iter().map(|r| (r.query_id, r)).collect();
    let windows = windows_from_markers(&sim.markers())?;
    let token_of = |q: QueryId| by_id.get(&q).map(|r| r.token);
    let scope = ing.store.scope().with_pid(csp.pid());
    let simulated: Vec<_> = sim.events().iter().filter_map(|e| scope.normalize(e)).collect();
    let sim_corr = correlate(&simulated, &windows, token_of)?;

    let (corr, n_events, provider_equivalent) = match cfg.provider {
        Provider::Simulated => (sim_corr, simulated.len(), None),
        Provider::Syscall => {
            std::thread::sleep(Duration::from_millis(cfg.probe_settle_ms));
            let feed = ingest_feed_file(cfg.probe_feed.as_deref().unwrap(), &scope, DEFAULT_REORDER_TOLERANCE_NS)?;
            if !feed.is_correlatable() {
                return Err(LabError::NotCorrelatable(format!(
                    "{} probe events arrived beyond the reorder tolerance",
                    feed.late.len()
                )));
            }
            let c = correlate(&feed.events, &windows, token_of)?;
            let eq = c.sets == sim_corr.sets;
            if !eq {
                warn!("probe and in-process hook observed different file sets");
            }
            (c, feed.events.len(), Some(eq))
        }
    };
    let observed: BTreeMap<QueryId, &BTreeSet<String>> = corr.sets.iter().map(|s| (s.query_id, &s.files)).collect();
    let observed_json: BTreeMap<u64, &BTreeSet<String>> = observed.iter().map(|(q, f)| (q.0, *f)).collect();
    write_json(&trace_dir.join("observed_sets.json"), &observed_json)?;
    let trace_done = Instant::now();

    let mut violations = Vec::new();
    let mut consistent = true;
    let mut observations = Vec::with_capacity(issued.len());
    let mut truth = BTreeMap::new();
    let empty = BTreeSet::new();
    for q in &issued {
        let posting = ground.postings(&q.keyword).expect("queries come from the index");
        let seen = observed.get(&q.query_id).copied().unwrap_or(&empty);
        let size = by_id[&q.query_id].result_size;
        if seen != posting || &q.returned != posting {
            violations.push(format!(
                "query {} ({}): observed {:?}, returned {:?}, postings {:?}",
                q.query_id, q.keyword, seen, q.returned, posting
            ));
        }
        if size != seen.len() || size != posting.len() {
            consistent = false;
        }
        observations.push(
            QueryObservation::with_files(q.token, size, seen.clone())
                .unwrap_or_else(|_| QueryObservation::new(q.token, size)),
        );
        truth.insert(q.token, q.keyword.clone());
    }

    let doc_names: Vec<String> = ing.documents.iter().map(|d| d.filename().to_owned()).collect();
    let aux = aux_knowledge(&ground, &doc_names, cfg.attacker_coverage, cfg.seed)?;
    let baseline = fma(&observations, &aux);
    let enhanced = efma(&observations, &aux);
    let attacks_done = Instant::now();

    let tally = |r: &AttackResult| -> Result<Tally> { Ok(r.tally(&truth)?) };
    let tokens: Vec<TokenRow> = issued
        .iter()
        .enumerate()
        .map(|(i, q)| TokenRow {
            label: format!("T{}", i + 1),
            query_id: q.query_id.0,
            token: q.token.to_hex(),
            keyword: q.keyword.as_str().to_owned(),
            result_size: by_id[&q.query_id].result_size,
            observed_files: observed.get(&q.query_id).map(|f| f.iter().cloned().collect()).unwrap_or_default(),
            fma: outcome(&baseline, &q.token, &q.keyword),
            efma: outcome(&enhanced, &q.token, &q.keyword),
        })
        .collect();
    let leakage_log = csp.leakage_log();
    let sizes: Vec<usize> = leakage_log.iter().filter(|l| l.kind == OpKind::Search).map(|l| l.magnitude).collect();
    let report = ExperimentReport {
        seed: cfg.seed,
        provider: cfg.provider,
        attacker_coverage: cfg.attacker_coverage,
        documents: ing.summary.documents,
        keywords: ing.summary.keywords,
        queries: issued.len(),
        accuracy: AccuracyPair { fma: score(&baseline, &truth)?, efma: score(&enhanced, &truth)? },
        tally: TallyPair { fma: tally(&baseline)?.into(), efma: tally(&enhanced)?.into() },
        tokens,
        leakage: LeakageSummary {
            search_queries: sizes.len(),
            search_total: sizes.iter().sum(),
            search_result_sizes: sizes,
        },
        checks: Checks {
            file_access_fidelity: violations.is_empty(),
            pipeline_consistent: consistent,
            violations,
            trace_events: n_events,
            trace_noise_events: corr.noise.len(),
            provider_equivalent,
        },
    };
    let done = Instant::now();
    let runtime = RuntimeStats {
        ingest_ms: ms(ingest_done - started),
        queries_ms: ms(queries_done - ingest_done),
        trace_ms: ms(trace_done - queries_done),
        attacks_ms: ms(attacks_done - trace_done),
        total_ms: ms(done - started),
    };

    write_outputs(out, &report, &runtime, &observations, &truth, &aux, &baseline, &enhanced)?;
    if !report.checks.file_access_fidelity {
        warn!("file-access fidelity violated: {:?}", report.checks.violations);
    }
    Ok(ExperimentOutcome {
        report,
        runtime,
        ground_truth: ground,
        observations,
        truth,
        fma: baseline,
        efma: enhanced,
        leakage_log,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    out: &Path,
    report: &ExperimentReport,
    runtime: &RuntimeStats,
    observations: &[QueryObservation],
    truth: &BTreeMap<SearchToken, Keyword>,
    aux: &AuxKnowledge,
    baseline: &AttackResult,
    enhanced: &AttackResult,
) -> Result<()> {
    write_json(&out.join("report.json"), report)?;
    write_json(&out.join("runtime.json"), runtime)?;
    let obs: Vec<_> = observations.iter().map(ObservationEntry::from_observation).collect();
    write_json(&out.join("observations.json"), &obs)?;
    write_json(&out.join("truth.json"), &truth_to_file(truth))?;
    for (name, r) in [("fma", baseline), ("efma", enhanced)] {
        let f = AttackResultFile::build(name, aux.coverage(), observations, r, Some(truth))?;
        write_json(&out.join("attacks").join(name).join("attack_result.json"), &f)?;
    }

    let mut csv = csv::Writer::from_writer(Vec::new());
    for t in &report.tokens {
        csv.serialize(CsvRow {
            label: &t.label,
            token: &t.token,
            keyword: &t.keyword,
            result_size: t.result_size,
            fma_guess: t.fma.guess.as_deref().unwrap_or(""),
            fma_status: &t.fma.status,
            fma_correct: t.fma.correct,
            efma_guess: t.efma.guess.as_deref().unwrap_or(""),
            efma_status: &t.efma.status,
            efma_correct: t.efma.correct,
        })
        .expect("csv rows serialize");
    }
    let bytes = csv.into_inner().map_err(|e| LabError::io(out.join("outcomes.csv"))(e.into_error()))?;
    write_file(&out.join("outcomes.csv"), &bytes)
}
