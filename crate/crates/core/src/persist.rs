//! Append-only event log on disk.
//!
//! One JSON event per line. Each append reaches the OS before it returns, so
//! a killed process loses nothing it acknowledged; `fsync` is batched.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::sdm::{EventRecord, EventSink, Store};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("log i/o")]
    Io(#[from] io::Error),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
}

/// When buffered appends are forced to stable storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlushPolicy {
    pub max_events: usize,
    pub max_delay: Duration,
}

impl Default for FlushPolicy {
    fn default() -> Self {
        FlushPolicy { max_events: 64, max_delay: Duration::from_millis(100) }
    }
}

#[derive(Debug)]
pub struct LogFile {
    path: PathBuf,
    file: File,
    policy: FlushPolicy,
    unsynced: usize,
    last_sync: Instant,
    appended: u64,
}

impl LogFile {
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Events appended through this handle.
    pub fn appended(&self) -> u64 {
        self.appended
    }

    pub fn append_event(&mut self, event: &EventRecord) -> io::Result<()> {
        let mut line = event.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.appended += 1;
        self.unsynced += 1;
        self.sync_if_due()
    }

    /// Syncs when the batch is full or the oldest unsynced write is too old.
    pub fn sync_if_due(&mut self) -> io::Result<()> {
        if self.unsynced > 0
            && (self.unsynced >= self.policy.max_events || self.last_sync.elapsed() >= self.policy.max_delay)
        {
            self.sync()?;
        }
        Ok(())
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.file.sync_data()?;
        self.unsynced = 0;
        self.last_sync = Instant::now();
        Ok(())
    }
}

impl EventSink for LogFile {
    fn append(&mut self, event: &EventRecord) -> Result<(), String> {
        self.append_event(event).map_err(|e| e.to_string())
    }

    fn flush(&mut self) -> Result<(), String> {
        self.sync_if_due().map_err(|e| e.to_string())
    }
}

impl Drop for LogFile {
    fn drop(&mut self) {
        let _ = self.file.sync_data();
    }
}

/// Complete events read from a log, and where the complete prefix ends.
#[derive(Debug)]
pub struct LogContents {
    pub events: Vec<EventRecord>,
    pub valid_len: u64,
    pub torn_tail: bool,
}

/// Parses a log. An unterminated last line is a torn write and is ignored;
/// any other malformed line is corruption.
pub fn read_log(reader: impl Read) -> Result<LogContents, PersistError> {
    let mut reader = BufReader::new(reader);
    let mut events = Vec::new();
    let mut valid_len = 0u64;
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(LogContents { events, valid_len, torn_tail: false });
        }
        line_no += 1;
        if buf.last() != Some(&b'\n') {
            return Ok(LogContents { events, valid_len, torn_tail: true });
        }
        let text = std::str::from_utf8(&buf[..n - 1])
            .map_err(|e| PersistError::CorruptLog { line: line_no, reason: e.to_string() })?;
        let event = EventRecord::from_line(text.trim_end_matches('\r'))
            .map_err(|e| PersistError::CorruptLog { line: line_no, reason: e.to_string() })?;
        events.push(event);
        valid_len += n as u64;
    }
}

pub struct Recovered {
    pub store: Store,
    pub log: LogFile,
    pub torn_tail: bool,
}

/// Rebuilds the store from the log at `path` (created if missing) and
/// reopens it for appending. A torn tail is cut off the file.
pub fn recover(path: &Path, policy: FlushPolicy) -> Result<Recovered, PersistError> {
    let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
    let contents = read_log(&mut file)?;
    let mut store = Store::new();
    for (i, event) in contents.events.into_iter().enumerate() {
        store
            .apply_event(event)
            .map_err(|e| PersistError::CorruptLog { line: i + 1, reason: e.to_string() })?;
    }
    if contents.torn_tail {
        file.set_len(contents.valid_len)?;
        file.sync_all()?;
    }
    file.seek(SeekFrom::End(0))?;
    let log = LogFile {
        path: path.to_path_buf(),
        file,
        policy,
        unsynced: 0,
        last_sync: Instant::now(),
        appended: 0,
    };
    Ok(Recovered { store, log, torn_tail: contents.torn_tail })
}

/// Writes `events` as a fresh log.
pub fn write_log<'a>(path: &Path, events: impl IntoIterator<Item = &'a EventRecord>) -> io::Result<()> {
    let mut w = io::BufWriter::new(File::create(path)?);
    for e in events {
        w.write_all(e.to_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.into_inner().map_err(|e| e.into_error())?.sync_all()
}
