//! Server-side request log.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub path: String,
    pub status: u16,
    /// Body bytes handed to the connection.
    pub bytes: u64,
    pub duration_ms: f64,
    /// False when the client went away before the body was sent.
    pub complete: bool,
}

/// Shared, append-only log of answered requests. Cloning shares the log.
#[derive(Debug, Clone, Default)]
pub struct RequestLog {
    entries: Arc<Mutex<Vec<LogEntry>>>,
    file: Option<Arc<Mutex<File>>>,
}

impl RequestLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also appends every entry to `path` as one JSON object per line.
    pub fn with_file(path: &Path) -> io::Result<Self> {
        let file = File::options().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Arc::default(),
            file: Some(Arc::new(Mutex::new(file))),
        })
    }

    pub fn record(&self, entry: LogEntry) {
        tracing::info!(
            path = %entry.path,
            status = entry.status,
            bytes = entry.bytes,
            duration_ms = format_args!("{:.1}", entry.duration_ms),
            complete = entry.complete,
            "request"
        );
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&entry).expect("log entries serialize");
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = writeln!(f, "{line}") {
                tracing::warn!(error = %e, "cannot write request log");
            }
        }
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Stage numbers of every /stage/{m} request, in log order.
    pub fn stage_requests(&self) -> Vec<usize> {
        self.entries()
            .iter()
            .filter_map(|e| e.path.strip_prefix("/stage/")?.parse().ok())
            .collect()
    }

    pub fn clear(&self) {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

/// A request being answered; recorded when dropped.
#[derive(Debug)]
pub struct PendingEntry {
    log: RequestLog,
    path: String,
    status: u16,
    bytes: u64,
    started: Instant,
    complete: bool,
}

impl PendingEntry {
    pub fn new(log: &RequestLog, path: impl Into<String>, status: u16) -> Self {
        Self {
            log: log.clone(),
            path: path.into(),
            status,
            bytes: 0,
            started: Instant::now(),
            complete: false,
        }
    }

    pub fn add(&mut self, bytes: usize) {
        self.bytes += bytes as u64;
    }

    pub fn finish(&mut self) {
        self.complete = true;
    }
}

impl Drop for PendingEntry {
    fn drop(&mut self) {
        self.log.record(LogEntry {
            path: std::mem::take(&mut self.path),
            status: self.status,
            bytes: self.bytes,
            duration_ms: self.started.elapsed().as_secs_f64() * 1e3,
            complete: self.complete,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_requests_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("requests.jsonl");
        let log = RequestLog::with_file(&path).unwrap();
        for p in ["/manifest", "/stage/1", "/stage/2", "/stage/x"] {
            let mut e = PendingEntry::new(&log, p, 200);
            e.add(3);
            e.finish();
        }
        assert_eq!(log.stage_requests(), vec![1, 2]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: LogEntry = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.path, "/manifest");
        assert_eq!(first.bytes, 3);
        assert!(first.complete);
    }
}
