//! File-access leakage: events, per-query windows and their correlation into
//! the observed file set `F_e` of each query.
//!
//! Providers (the in-process hook and the external probe feed) live in the
//! lab crate; they all reduce to [`FileAccessEvent`]s which are scoped with
//! [`StoreScope`], ordered with [`ReorderBuffer`] and binned by [`correlate`].

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::validate_filename;
use crate::sse::SearchToken;

/// Identifier the CSP assigns to each search, strictly increasing per session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryId(pub u64);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("window for query {0} does not satisfy begin < end")]
    EmptyWindow(QueryId),
    #[error("windows of queries {0} and {1} overlap")]
    OverlappingWindows(QueryId, QueryId),
    #[error("no token known for query {0}")]
    UnknownQuery(QueryId),
    #[error("malformed marker line {0:?}")]
    MalformedMarker(String),
    #[error("unpaired or out-of-order marker for query {0}")]
    UnpairedMarker(QueryId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessOp {
    Open,
    Read,
}

impl AccessOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessOp::Open => "open",
            AccessOp::Read => "read",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(AccessOp::Open),
            "read" => Some(AccessOp::Read),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileAccessEvent {
    pub timestamp_ns: u64,
    pub pid: u32,
    pub op: AccessOp,
    pub path: String,
}

/// Time span `[begin_ns, end_ns]` (inclusive) during which the CSP served
/// one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryTraceWindow {
    pub query_id: QueryId,
    pub begin_ns: u64,
    pub end_ns: u64,
}

/// `F_e` for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedFileSet {
    pub query_id: QueryId,
    pub token: SearchToken,
    pub files: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerPhase {
    Begin,
    End,
}

/// One line of the server's marker channel:
/// `QUERY <query_id> BEGIN|END <nanosecond timestamp>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryMarker {
    pub query_id: QueryId,
    pub phase: MarkerPhase,
    pub ts_ns: u64,
}

impl QueryMarker {
    pub fn to_line(&self) -> String {
        let phase = match self.phase {
            MarkerPhase::Begin => "BEGIN",
            MarkerPhase::End => "END",
        };
        format!("QUERY {} {} {}", self.query_id, phase, self.ts_ns)
    }

    pub fn parse(line: &str) -> Result<Self, TraceError> {
        let bad = || TraceError::MalformedMarker(line.to_owned());
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some("QUERY") {
            return Err(bad());
        }
        let query_id = parts.next().and_then(|s| s.parse().ok()).map(QueryId).ok_or_else(bad)?;
        let phase = match parts.next() {
            Some("BEGIN") => MarkerPhase::Begin,
            Some("END") => MarkerPhase::End,
            _ => return Err(bad()),
        };
        let ts_ns = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self { query_id, phase, ts_ns })
    }
}

/// Pairs BEGIN/END markers into windows. Queries are serialized by the CSP,
/// so every BEGIN must be followed by the END of the same query.
pub fn windows_from_markers(markers: &[QueryMarker]) -> Result<Vec<QueryTraceWindow>, TraceError> {
    let mut out = Vec::new();
    let mut open: Option<QueryMarker> = None;
    for m in markers {
        match (m.phase, open.take()) {
            (MarkerPhase::Begin, None) => open = Some(*m),
            (MarkerPhase::End, Some(b)) if b.query_id == m.query_id => {
                if b.ts_ns >= m.ts_ns {
                    return Err(TraceError::EmptyWindow(m.query_id));
                }
                out.push(QueryTraceWindow { query_id: m.query_id, begin_ns: b.ts_ns, end_ns: m.ts_ns });
            }
            _ => return Err(TraceError::UnpairedMarker(m.query_id)),
        }
    }
    if let Some(b) = open {
        return Err(TraceError::UnpairedMarker(b.query_id));
    }
    Ok(out)
}

/// Which raw events belong to the CSP's document store, and how to turn
/// their absolute paths into store-relative filenames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreScope {
    prefixes: Vec<String>,
    pid: Option<u32>,
}

/// Lexically cleans an absolute path: collapses repeated `/` and `.`
/// segments. Paths containing `..` are rejected.
fn clean_path(path: &str) -> Option<String> {
    if !path.starts_with('/') {
        return None;
    }
    let mut out = String::with_capacity(path.len());
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => return None,
            s => {
                out.push('/');
                out.push_str(s);
            }
        }
    }
    Some(out)
}

impl StoreScope {
    /// `docs_dir` is the absolute path of the store's `docs/` directory.
    pub fn new(docs_dir: &str) -> Self {
        let mut s = Self { prefixes: Vec::new(), pid: None };
        s.add_prefix(docs_dir);
        s
    }

    /// Restricts the scope to events from `pid`.
    pub fn with_pid(mut self, pid: u32) -> Self {
        self.pid = Some(pid);
        self
    }

    /// Accepts the same store under another mount point, e.g. the path seen
    /// inside a container.
    pub fn with_alias(mut self, docs_dir: &str) -> Self {
        self.add_prefix(docs_dir);
        self
    }

    fn add_prefix(&mut self, docs_dir: &str) {
        let mut p = clean_path(docs_dir).unwrap_or_else(|| docs_dir.to_owned());
        if !p.ends_with('/') {
            p.push('/');
        }
        self.prefixes.push(p);
    }

    pub fn pid(&self) -> Option<u32> {
        self.pid
    }

    /// Store-relative filename of `path`, if it lies under the store.
    pub fn relative_path(&self, path: &str) -> Option<String> {
        let clean = clean_path(path)?;
        self.prefixes.iter().find_map(|p| {
            let rel = clean.strip_prefix(p.as_str())?;
            validate_filename(rel).ok()?;
            Some(rel.to_owned())
        })
    }

    /// The event with a store-relative path, or `None` if it is out of scope.
    pub fn normalize(&self, ev: &FileAccessEvent) -> Option<FileAccessEvent> {
        if self.pid.is_some_and(|p| p != ev.pid) {
            return None;
        }
        Some(FileAccessEvent { path: self.relative_path(&ev.path)?, ..ev.clone() })
    }
}

/// Restores timestamp order of an event feed whose records may arrive
/// slightly out of order. Events older than `tolerance_ns` relative to the
/// newest timestamp seen are held back as late and never emitted.
#[derive(Debug, Clone)]
pub struct ReorderBuffer {
    tolerance_ns: u64,
    pending: BTreeMap<(u64, u64), FileAccessEvent>,
    seq: u64,
    max_seen: u64,
    late: Vec<FileAccessEvent>,
}

pub const DEFAULT_REORDER_TOLERANCE_NS: u64 = 10_000_000;

impl Default for ReorderBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_REORDER_TOLERANCE_NS)
    }
}

impl ReorderBuffer {
    pub fn new(tolerance_ns: u64) -> Self {
        Self { tolerance_ns, pending: BTreeMap::new(), seq: 0, max_seen: 0, late: Vec::new() }
    }

    /// Buffers `ev` and returns the events that can no longer be preceded by
    /// an in-tolerance arrival, in timestamp order.
    pub fn push(&mut self, ev: FileAccessEvent) -> Vec<FileAccessEvent> {
        if self.max_seen.saturating_sub(ev.timestamp_ns) > self.tolerance_ns {
            self.late.push(ev);
            return Vec::new();
        }
        self.max_seen = self.max_seen.max(ev.timestamp_ns);
        self.pending.insert((ev.timestamp_ns, self.seq), ev);
        self.seq += 1;
        let horizon = self.max_seen.saturating_sub(self.tolerance_ns);
        let mut ready = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > horizon {
                break;
            }
            ready.push(entry.remove());
        }
        ready
    }

    /// Flushes everything still buffered.
    pub fn finish(&mut self) -> Vec<FileAccessEvent> {
        core::mem::take(&mut self.pending).into_values().collect()
    }

    pub fn late(&self) -> &[FileAccessEvent] {
        &self.late
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correlation {
    /// One set per window, in window order.
    pub sets: Vec<ObservedFileSet>,
    /// Events that fall outside every window.
    pub noise: Vec<FileAccessEvent>,
}

/// Bins store-relative events into the query windows that contain them.
pub fn correlate<F>(
    events: &[FileAccessEvent],
    windows: &[QueryTraceWindow],
    token_of: F,
) -> Result<Correlation, TraceError>
where
    F: Fn(QueryId) -> Option<SearchToken>,
{
    let mut order: Vec<&QueryTraceWindow> = windows.iter().collect();
    order.sort_by_key(|w| (w.begin_ns, w.end_ns));
    for w in &order {
        if w.begin_ns >= w.end_ns {
            return Err(TraceError::EmptyWindow(w.query_id));
        }
    }
    for pair in order.windows(2) {
        if pair[0].end_ns >= pair[1].begin_ns {
            return Err(TraceError::OverlappingWindows(pair[0].query_id, pair[1].query_id));
        }
    }

    let mut files: Vec<BTreeSet<String>> = (0..order.len()).map(|_| BTreeSet::new()).collect();
    let mut noise = Vec::new();
    for ev in events {
        let t = ev.timestamp_ns;
        let i = order.partition_point(|w| w.begin_ns <= t);
        match i.checked_sub(1) {
            Some(j) if t <= order[j].end_ns => {
                files[j].insert(ev.path.clone());
            }
            _ => noise.push(ev.clone()),
        }
    }

    let mut by_query: BTreeMap<QueryId, BTreeSet<String>> = BTreeMap::new();
    for (w, f) in order.iter().zip(files) {
        by_query.insert(w.query_id, f);
    }
    let sets = windows
        .iter()
        .map(|w| {
            let token = token_of(w.query_id).ok_or(TraceError::UnknownQuery(w.query_id))?;
            Ok(ObservedFileSet {
                query_id: w.query_id,
                token,
                files: by_query.get(&w.query_id).cloned().unwrap_or_default(),
            })
        })
        .collect::<Result<_, TraceError>>()?;
    Ok(Correlation { sets, noise })
}
