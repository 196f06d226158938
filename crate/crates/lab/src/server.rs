//! The honest-but-curious CSP: encrypted index in memory, ciphertexts on
//! disk, one search at a time, every posting file opened and read per query.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, error, warn};
use sseleak_core::wire::{parse_header, HEADER_LEN};
use sseleak_core::{
    AccessOp, AddOutcome, CiphertextDocument, DeletionToken, EncryptedIndex, FileAccessEvent, Frame, LeakageRecord,
    MarkerPhase, OpKind, QueryId, QueryMarker, QueryTraceWindow, SearchResponse, SearchToken,
};

use crate::clock::StrictClock;
use crate::error::{LabError, Result};
use crate::store::Store;

/// Requests above this size are not buffered; the connection is dropped.
pub const MAX_REQUEST_LEN: u32 = 1 << 20;

/// Observer invoked synchronously inside the execution lane.
pub trait TraceHook: Send + Sync {
    fn on_marker(&self, _marker: &QueryMarker) {}
    /// `event.path` is the absolute path the server opened.
    fn on_access(&self, _event: &FileAccessEvent) {}
    fn on_query(&self, _record: &QueryRecord) {}
}

/// Server-side log entry for one search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: QueryId,
    pub token: SearchToken,
    pub result_size: usize,
    pub window: QueryTraceWindow,
    /// Posting entries whose ciphertext could not be read.
    pub missing: Vec<String>,
}

struct Lane {
    index: EncryptedIndex,
    next_id: u64,
    queries: Vec<QueryRecord>,
    leakage: Vec<LeakageRecord>,
}

pub struct Csp {
    store: Store,
    lane: Mutex<Lane>,
    clock: StrictClock,
    hooks: Vec<Arc<dyn TraceHook>>,
    pid: u32,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

impl Csp {
    pub fn open(store: Store) -> Result<Self> {
        let index = store.read_index()?;
        Ok(Self {
            store,
            lane: Mutex::new(Lane { index, next_id: 1, queries: Vec::new(), leakage: Vec::new() }),
            clock: StrictClock::new(),
            hooks: Vec::new(),
            pid: std::process::id(),
        })
    }

    pub fn with_hook(mut self, hook: Arc<dyn TraceHook>) -> Self {
        self.hooks.push(hook);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Process id that performs the file accesses.
    pub fn pid(&self) -> u32 {
        self.pid
    }

    pub fn query_log(&self) -> Vec<QueryRecord> {
        lock(&self.lane).queries.clone()
    }

    pub fn leakage_log(&self) -> Vec<LeakageRecord> {
        lock(&self.lane).leakage.clone()
    }

    fn marker(&self, query_id: QueryId, phase: MarkerPhase) -> u64 {
        let m = QueryMarker { query_id, phase, ts_ns: self.clock.now() };
        for h in &self.hooks {
            h.on_marker(&m);
        }
        m.ts_ns
    }

    fn access(&self, op: AccessOp, path: &std::path::Path) {
        let ev = FileAccessEvent {
            timestamp_ns: self.clock.now(),
            pid: self.pid,
            op,
            path: path.to_string_lossy().into_owned(),
        };
        for h in &self.hooks {
            h.on_access(&ev);
        }
    }

    fn fetch(&self, filename: &str) -> Result<Vec<u8>> {
        let path = self.store.doc_path(filename)?;
        // Plain File: no userspace cache, so every query reaches open(2).
        let mut f = File::open(&path).map_err(LabError::io(&path))?;
        self.access(AccessOp::Open, &path);
        let mut blob = Vec::new();
        f.read_to_end(&mut blob).map_err(LabError::io(&path))?;
        self.access(AccessOp::Read, &path);
        Ok(blob)
    }

    pub fn handle_search(&self, token: &SearchToken) -> SearchResponse {
        let mut lane = lock(&self.lane);
        let query_id = QueryId(lane.next_id);
        lane.next_id += 1;
        let begin_ns = self.marker(query_id, MarkerPhase::Begin);

        let files = match lane.index.lookup(token) {
            Ok(f) => f.unwrap_or_default(),
            Err(e) => {
                error!("query {query_id}: posting for {token} unreadable: {e}");
                BTreeSet::new()
            }
        };
        let mut cts = Vec::with_capacity(files.len());
        let mut missing = Vec::new();
        for name in files {
            match self.fetch(&name).and_then(|blob| Ok(CiphertextDocument::new(name.clone(), blob)?)) {
                Ok(c) => cts.push(c),
                Err(e) => {
                    error!("integrity fault in query {query_id}: {e}");
                    missing.push(name);
                }
            }
        }

        let end_ns = self.marker(query_id, MarkerPhase::End);
        let record = QueryRecord {
            query_id,
            token: *token,
            result_size: cts.len(),
            window: QueryTraceWindow { query_id, begin_ns, end_ns },
            missing,
        };
        for h in &self.hooks {
            h.on_query(&record);
        }
        lane.leakage.push(LeakageRecord::search(record.result_size));
        lane.queries.push(record);
        SearchResponse::new(query_id, cts)
    }

    /// Stores a new ciphertext and its index updates. Returns the leakage
    /// the CSP observes: one index entry per keyword of the document.
    pub fn apply_add(&self, outcome: &AddOutcome) -> Result<LeakageRecord> {
        let mut lane = lock(&self.lane);
        if self.store.doc_path(outcome.ciphertext.filename())?.exists() {
            return Err(LabError::Sse(sseleak_core::SseError::DuplicateDocument(
                outcome.ciphertext.filename().to_owned(),
            )));
        }
        self.store.write_doc(&outcome.ciphertext)?;
        let mut next = lane.index.clone();
        let update = next.apply(&outcome.updates);
        self.store.write_index(&next)?;
        lane.index = next;
        let leak = LeakageRecord::new(OpKind::Add, outcome.updates.len());
        lane.leakage.push(update);
        lane.leakage.push(leak);
        Ok(leak)
    }

    pub fn apply_delete(&self, token: &DeletionToken) -> Result<LeakageRecord> {
        let mut lane = lock(&self.lane);
        self.store.remove_doc(&token.filename)?;
        let mut next = lane.index.clone();
        let update = next.apply(&token.updates);
        self.store.write_index(&next)?;
        lane.index = next;
        let leak = LeakageRecord::new(OpKind::Delete, token.updates.len());
        lane.leakage.push(update);
        lane.leakage.push(leak);
        Ok(leak)
    }
}

/// Message type plus payload, or the declared length if it exceeded the limit.
pub(crate) type RawFrame = (u8, Result<Vec<u8>, u32>);

/// Reads one frame header and payload. `Ok(None)` on clean EOF before a
/// header. Payloads longer than `max_len` are reported without being read.
pub(crate) fn read_frame_raw<R: Read>(r: &mut R, max_len: u32) -> io::Result<Option<RawFrame>> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let (kind, len) = parse_header(&header);
    if len > max_len {
        return Ok(Some((kind, Err(len))));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some((kind, Ok(payload))))
}

fn serve_connection(csp: &Csp, mut stream: TcpStream) -> io::Result<()> {
    let peer = stream.peer_addr().ok();
    loop {
        let Some((kind, payload)) = read_frame_raw(&mut stream, MAX_REQUEST_LEN)? else {
            debug!("connection {peer:?} closed");
            return Ok(());
        };
        let payload = match payload {
            Ok(p) => p,
            Err(len) => {
                warn!("{peer:?}: {len}-byte frame exceeds limit; closing");
                stream.write_all(&Frame::Error(format!("frame of {len} bytes exceeds limit")).encode())?;
                return stream.shutdown(Shutdown::Both);
            }
        };
        let reply = match Frame::decode_payload(kind, &payload) {
            Ok(Frame::Search(token)) => Frame::Response(csp.handle_search(&token)),
            Ok(other) => Frame::Error(format!("unexpected message type 0x{:02x}", other.kind())),
            Err(e) => {
                debug!("{peer:?}: {e}");
                Frame::Error(e.to_string())
            }
        };
        stream.write_all(&reply.encode())?;
    }
}

/// Running server; shut down explicitly or on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_and_join();
        }
    }
}

/// Binds `endpoint` and serves each connection on its own thread. Searches
/// remain serialized by the CSP's execution lane.
pub fn spawn(csp: Arc<Csp>, endpoint: impl ToSocketAddrs) -> Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop2 = Arc::clone(&stop);
    let thread = std::thread::Builder::new().name("csp-accept".into()).spawn(move || {
        for conn in listener.incoming() {
            if stop2.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let csp = Arc::clone(&csp);
                    let _ = std::thread::Builder::new().name("csp-conn".into()).spawn(move || {
                        if let Err(e) = serve_connection(&csp, stream) {
                            debug!("connection ended: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    })?;
    Ok(ServerHandle { addr, stop, thread: Some(thread) })
}
