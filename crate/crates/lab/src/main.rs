use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;
use sseleak_core::{
    correlate, decrypt_document, efma, fma, keygen, AuxKnowledge, QueryId, QueryObservation, QueryTraceWindow,
    StoreScope, DEFAULT_REORDER_TOLERANCE_NS,
};
use sseleak_lab::formats::{
    parse_token, read_index_json, read_json, read_jsonl, truth_from_file, truth_to_file, write_json, AttackResultFile,
    ObservationEntry, TruthFile, WindowLine,
};
use sseleak_lab::providers::ingest_feed_file;
use sseleak_lab::{
    ingest, make_tie_corpus, run_experiment, server, write_tie_corpus, Csp, CspClient, ExperimentConfig, LabError,
    Provider, Result, SimulatedProvider, Store, TieSpec,
};

type Attack = fn(&[QueryObservation], &AuxKnowledge) -> sseleak_core::AttackResult;

/// Searchable-encryption leakage laboratory.
#[derive(Parser)]
#[command(name = "sseleak", version)]
struct Cli {
    /// Experiment config (TOML); supplies defaults for the other flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    provider: Option<Provider>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackMode {
    Fma,
    Efma,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Encrypt a corpus into <output>/store and dump <output>/index.json.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Run the CSP on a store until killed.
    Serve {
        /// Defaults to <output>/store.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Archive in-process trace events, markers and windows here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Search a running CSP; writes <output>/truth.json when --output is set.
    Query {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(required = true)]
        keywords: Vec<String>,
    },
    /// Correlate a probe feed with query windows into observed file sets.
    Trace {
        /// Probe feed or archived events.jsonl.
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        windows: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Keep only events of this process.
        #[arg(long)]
        pid: Option<u32>,
        /// Extra absolute path under which the store's docs/ is visible.
        #[arg(long)]
        alias: Vec<String>,
    },
    /// Run FMA and/or eFMA on recorded observations.
    Attack {
        #[arg(long)]
        observations: PathBuf,
        /// Auxiliary plaintext index (canonical index JSON).
        #[arg(long)]
        aux: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        mode: AttackMode,
        /// Corpus size when the aux index covers only part of it.
        #[arg(long)]
        total_docs: Option<usize>,
    },
    /// Full pipeline from --config.
    Experiment,
    /// Generate a corpus with one frequency-tie group plus its experiment.toml.
    MakeTieCorpus {
        #[arg(long)]
        tokens: usize,
        #[arg(long)]
        tie_group: usize,
        #[arg(long)]
        tie_size: usize,
        /// 1-based query positions of the tied keywords, e.g. 12,13,17,18.
        #[arg(long, value_delimiter = ',')]
        tie_positions: Option<Vec<usize>>,
    },
}

struct Ctx {
    config: Option<ExperimentConfig>,
    seed: Option<u64>,
    provider: Option<Provider>,
    output: Option<PathBuf>,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.or(self.config.as_ref().map(|c| c.seed)).unwrap_or(0)
    }

    fn output(&self) -> Option<PathBuf> {
        self.output.clone().or_else(|| self.config.as_ref().map(|c| c.output_dir.clone()))
    }

    fn require_output(&self) -> Result<PathBuf> {
        self.output().ok_or_else(|| LabError::Config("--output (or a config with output_dir) is required".into()))
    }

    fn base_config(&self) -> ExperimentConfig {
        self.config.clone().unwrap_or_else(|| ExperimentConfig::new("", ""))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("sseleak: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let ctx = Ctx { config, seed: cli.seed, provider: cli.provider, output: cli.output };
    match cli.command {
        Command::Ingest { corpus } => cmd_ingest(&ctx, corpus),
        Command::Serve { store, listen, trace_dir } => cmd_serve(&ctx, store, &listen, trace_dir),
        Command::Query { connect, keywords } => cmd_query(&ctx, &connect, &keywords),
        Command::Trace { events, windows, store, pid, alias } => {
            cmd_trace(&ctx, &events, &windows, &store, pid, &alias)
        }
        Command::Attack { observations, aux, truth, mode, total_docs } => {
            cmd_attack(&ctx, &observations, &aux, truth.as_deref(), mode, total_docs)
        }
        Command::Experiment => cmd_experiment(&ctx),
        Command::MakeTieCorpus { tokens, tie_group, tie_size, tie_positions } => {
            cmd_make_tie_corpus(&ctx, tokens, tie_group, tie_size, tie_positions)
        }
    }
}

fn cmd_ingest(ctx: &Ctx, corpus: Option<PathBuf>) -> Result<()> {
    let corpus = corpus
        .or_else(|| ctx.config.as_ref().map(|c| c.corpus_dir.clone()))
        .ok_or_else(|| LabError::Config("--corpus (or a config with corpus_dir) is required".into()))?;
    let out = ctx.require_output()?;
    let ing = ingest(&corpus, &out, ctx.seed(), ctx.base_config().normalizer())?;
    println!("{}", serde_json::to_string(&ing.summary).expect("serializable"));
    Ok(())
}

fn cmd_serve(ctx: &Ctx, store: Option<PathBuf>, listen: &str, trace_dir: Option<PathBuf>) -> Result<()> {
    let store = match store {
        Some(s) => s,
        None => ctx.require_output()?.join("store"),
    };
    let mut csp = Csp::open(Store::open(&store)?)?;
    if let Some(dir) = trace_dir {
        csp = csp.with_hook(Arc::new(SimulatedProvider::with_archive(&dir)?));
    }
    let pid = csp.pid();
    let handle = server::spawn(Arc::new(csp), listen)?;
    println!("listening on {} pid {pid}", handle.local_addr());
    handle.wait();
    Ok(())
}

fn cmd_query(ctx: &Ctx, endpoint: &str, keywords: &[String]) -> Result<()> {
    let keys = keygen(ctx.seed());
    let normalizer = ctx.base_config().normalizer();
    let mut client = CspClient::connect(endpoint)?;
    let mut truth = BTreeMap::new();
    for (i, raw) in keywords.iter().enumerate() {
        let w = normalizer
            .normalize_token(raw)
            .ok_or_else(|| LabError::Config(format!("{raw:?} is not a searchable keyword")))?;
        let token = sseleak_core::trapdoor(&keys, &w);
        let resp = client.search(&token)?;
        for c in &resp.ciphertexts {
            decrypt_document(&keys, c)?;
        }
        let files: Vec<&str> = resp.filenames().collect();
        println!(
            "T{} {w} token={token} query_id={} result_size={} files={}",
            i + 1,
            resp.query_id,
            resp.result_size(),
            files.join(",")
        );
        truth.insert(token, w);
    }
    if let Some(out) = ctx.output() {
        write_json(&out.join("truth.json"), &truth_to_file(&truth))?;
    }
    Ok(())
}

fn cmd_trace(ctx: &Ctx, events: &Path, windows: &Path, store: &Path, pid: Option<u32>, alias: &[String]) -> Result<()> {
    let store = Store::open(store)?;
    let mut scope: StoreScope = store.scope();
    if let Some(p) = pid {
        scope = scope.with_pid(p);
    }
    for a in alias {
        scope = scope.with_alias(a);
    }
    let feed = ingest_feed_file(events, &scope, DEFAULT_REORDER_TOLERANCE_NS)?;
    if !feed.is_correlatable() {
        return Err(LabError::NotCorrelatable(format!(
            "{} events arrived beyond the reorder tolerance",
            feed.late.len()
        )));
    }
    let lines: Vec<WindowLine> = read_jsonl(windows)?;
    let mut tokens = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    let mut wins = Vec::with_capacity(lines.len());
    for l in &lines {
        let q = QueryId(l.query_id);
        tokens.insert(q, parse_token(&l.token)?);
        sizes.insert(q, l.result_size);
        wins.push(QueryTraceWindow { query_id: q, begin_ns: l.begin_ns, end_ns: l.end_ns });
    }
    let corr = correlate(&feed.events, &wins, |q| tokens.get(&q).copied())?;
    let out = ctx.output().unwrap_or_else(|| windows.parent().unwrap_or(Path::new(".")).to_owned());
    let sets: BTreeMap<u64, Vec<&String>> =
        corr.sets.iter().map(|s| (s.query_id.0, s.files.iter().collect())).collect();
    write_json(&out.join("observed_sets.json"), &sets)?;
    let mut mismatched = 0;
    let obs: Vec<ObservationEntry> = corr
        .sets
        .iter()
        .map(|s| {
            let size = sizes[&s.query_id];
            let o = QueryObservation::with_files(s.token, size, s.files.clone()).unwrap_or_else(|_| {
                mismatched += 1;
                QueryObservation::new(s.token, size)
            });
            ObservationEntry::from_observation(&o)
        })
        .collect();
    write_json(&out.join("observations.json"), &obs)?;
    println!(
        "queries={} events={} noise={} malformed={} out_of_scope={} size_mismatches={mismatched}",
        corr.sets.len(),
        feed.events.len(),
        corr.noise.len(),
        feed.malformed,
        feed.out_of_scope
    );
    Ok(())
}

fn cmd_attack(
    ctx: &Ctx,
    observations: &Path,
    aux: &Path,
    truth: Option<&Path>,
    mode: AttackMode,
    total_docs: Option<usize>,
) -> Result<()> {
    let entries: Vec<ObservationEntry> = read_json(observations)?;
    let obs = entries.iter().map(ObservationEntry::to_observation).collect::<Result<Vec<_>>>()?;
    let index = read_index_json(aux)?;
    let known: std::collections::BTreeSet<String> = index.documents().into_iter().map(str::to_owned).collect();
    let aux = match total_docs {
        Some(n) => AuxKnowledge::partial(index, known, n)?,
        None => AuxKnowledge::full(index),
    };
    let truth = truth.map(|p| truth_from_file(&read_json::<TruthFile>(p)?)).transpose()?;
    let out = ctx.output().unwrap_or_else(|| PathBuf::from("."));
    let runs: &[(&str, Attack)] = match mode {
        AttackMode::Fma => &[("fma", fma)],
        AttackMode::Efma => &[("efma", efma)],
        AttackMode::Both => &[("fma", fma), ("efma", efma)],
    };
    for (name, attack) in runs {
        let r = attack(&obs, &aux);
        let f = AttackResultFile::build(name, aux.coverage(), &obs, &r, truth.as_ref())?;
        write_json(&out.join("attacks").join(name).join("attack_result.json"), &f)?;
        match (f.accuracy, f.tally) {
            (Some(a), Some(t)) => {
                println!("{name} accuracy {a:.3} ({}/{})", t.correct, t.correct + t.wrong + t.unresolved)
            }
            _ => println!(
                "{name} resolved {}/{}",
                f.tokens.iter().filter(|t| t.guessed_keyword.is_some()).count(),
                f.tokens.len()
            ),
        }
    }
    Ok(())
}

fn cmd_experiment(ctx: &Ctx) -> Result<()> {
    let mut cfg = ctx.config.clone().ok_or_else(|| LabError::Config("experiment needs --config".into()))?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(p) = ctx.provider {
        cfg.provider = p;
    }
    if let Some(o) = &ctx.output {
        cfg.output_dir = o.clone();
    }
    let out = run_experiment(&cfg)?;
    let r = &out.report;
    for (name, acc, t) in [("fma", r.accuracy.fma, r.tally.fma), ("efma", r.accuracy.efma, r.tally.efma)] {
        println!("{name:<5} accuracy {acc:.3}  correct {} wrong {} unresolved {}", t.correct, t.wrong, t.unresolved);
    }
    println!("report: {}", cfg.output_dir.join("report.json").display());
    if !r.checks.file_access_fidelity || !r.checks.pipeline_consistent {
        return Err(LabError::Fidelity(r.checks.violations.len()));
    }
    Ok(())
}

fn cmd_make_tie_corpus(
    ctx: &Ctx,
    n_tokens: usize,
    tie_group: usize,
    tie_size: usize,
    tie_positions: Option<Vec<usize>>,
) -> Result<()> {
    let out = ctx.require_output()?;
    let corpus = make_tie_corpus(&TieSpec { n_tokens, tie_group, tie_size, tie_positions })?;
    write_tie_corpus(&out, &corpus, ctx.seed())?;
    println!(
        "{} documents, {} keywords, tied: {}",
        corpus.documents.len(),
        corpus.queries.len(),
        corpus.tied.iter().map(|w| w.as_str()).collect::<Vec<_>>().join(",")
    );
    println!("config: {}", out.join("experiment.toml").display());
    Ok(())
}
