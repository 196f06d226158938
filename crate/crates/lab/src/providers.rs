//! Trace providers: the in-process hook and the external probe feed.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, PoisonError};

use log::{debug, warn};
use sseleak_core::{FileAccessEvent, QueryMarker, ReorderBuffer, StoreScope};

use crate::error::{LabError, Result};
use crate::formats::{ProbeLine, WindowLine};
use crate::server::{QueryRecord, TraceHook};

struct LiveFiles {
    events: BufWriter<File>,
    markers: BufWriter<File>,
    windows: BufWriter<File>,
}

#[derive(Default)]
struct Captured {
    events: Vec<FileAccessEvent>,
    markers: Vec<QueryMarker>,
    queries: Vec<QueryRecord>,
}

/// Records every access the CSP performs, straight from its execution lane.
/// Optionally mirrors them to `events.jsonl`, `markers.log` and
/// `windows.jsonl` as they happen.
#[derive(Default)]
pub struct SimulatedProvider {
    captured: Mutex<Captured>,
    live: Option<Mutex<LiveFiles>>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(LabError::io(&path))?))
}

impl SimulatedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_archive(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        Ok(Self {
            captured: Mutex::default(),
            live: Some(Mutex::new(LiveFiles {
                events: create(dir, "events.jsonl")?,
                markers: create(dir, "markers.log")?,
                windows: create(dir, "windows.jsonl")?,
            })),
        })
    }

    pub fn events(&self) -> Vec<FileAccessEvent> {
        self.captured.lock().unwrap_or_else(PoisonError::into_inner).events.clone()
    }

    pub fn markers(&self) -> Vec<QueryMarker> {
        self.captured.lock().unwrap_or_else(PoisonError::into_inner).markers.clone()
    }

    pub fn queries(&self) -> Vec<QueryRecord> {
        self.captured.lock().unwrap_or_else(PoisonError::into_inner).queries.clone()
    }

    fn mirror(&self, f: impl FnOnce(&mut LiveFiles) -> io::Result<()>) {
        if let Some(live) = &self.live {
            let mut files = live.lock().unwrap_or_else(PoisonError::into_inner);
            if let Err(e) = f(&mut files) {
                warn!("trace archive write failed: {e}");
            }
        }
    }
}

fn json_line<T: serde::Serialize>(w: &mut impl Write, v: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    w.flush()
}

impl TraceHook for SimulatedProvider {
    fn on_marker(&self, marker: &QueryMarker) {
        self.captured.lock().unwrap_or_else(PoisonError::into_inner).markers.push(*marker);
        self.mirror(|f| {
            writeln!(f.markers, "{}", marker.to_line())?;
            f.markers.flush()
        });
    }

    fn on_access(&self, event: &FileAccessEvent) {
        self.captured.lock().unwrap_or_else(PoisonError::into_inner).events.push(event.clone());
        self.mirror(|f| json_line(&mut f.events, &ProbeLine::from(event)));
    }

    fn on_query(&self, record: &QueryRecord) {
        self.captured.lock().unwrap_or_else(PoisonError::into_inner).queries.push(record.clone());
        self.mirror(|f| json_line(&mut f.windows, &window_line(record)));
    }
}

pub fn window_line(r: &QueryRecord) -> WindowLine {
    WindowLine {
        query_id: r.query_id.0,
        begin_ns: r.window.begin_ns,
        end_ns: r.window.end_ns,
        token: r.token.to_hex(),
        result_size: r.result_size,
    }
}

/// Outcome of replaying a probe feed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedReport {
    /// In-scope events, store-relative, in timestamp order.
    pub events: Vec<FileAccessEvent>,
    pub malformed: usize,
    pub out_of_scope: usize,
    /// Events that arrived beyond the reorder tolerance.
    pub late: Vec<FileAccessEvent>,
}

impl FeedReport {
    pub fn is_correlatable(&self) -> bool {
        self.late.is_empty()
    }
}

/// Parses a JSON-lines probe feed, keeping events of `scope` only.
pub fn ingest_feed<R: BufRead>(feed: R, scope: &StoreScope, tolerance_ns: u64) -> io::Result<FeedReport> {
    let mut report = FeedReport::default();
    let mut buf = ReorderBuffer::new(tolerance_ns);
    for (n, line) in feed.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(ev) = serde_json::from_str::<ProbeLine>(&line).ok().and_then(|p| p.to_event()) else {
            debug!("feed line {}: malformed", n + 1);
            report.malformed += 1;
            continue;
        };
        match scope.normalize(&ev) {
            Some(ev) => report.events.extend(buf.push(ev)),
            None => report.out_of_scope += 1,
        }
    }
    report.events.extend(buf.finish());
    report.late = buf.late().to_vec();
    if report.malformed > 0 {
        warn!("skipped {} malformed feed lines", report.malformed);
    }
    if !report.late.is_empty() {
        warn!("{} feed events arrived beyond the reorder tolerance", report.late.len());
    }
    Ok(report)
}

pub fn ingest_feed_file(path: &Path, scope: &StoreScope, tolerance_ns: u64) -> Result<FeedReport> {
    let f = File::open(path).map_err(LabError::io(path))?;
    ingest_feed(BufReader::new(f), scope, tolerance_ns).map_err(LabError::io(path))
}

/// The kernel probe only exists for Linux hosts.
pub fn syscall_supported() -> Result<()> {
    if cfg!(target_os = "linux") {
        Ok(())
    } else {
        Err(LabError::ProviderUnavailable(
            "the syscall provider needs a Linux kernel probe; use --provider simulated".into(),
        ))
    }
}
