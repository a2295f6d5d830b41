//! Append-only event sinks and the per-process logger that writes phase
//! markers into them.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use mdslite_core::logfmt::parse_log;
use mdslite_core::phase::marker_name;
use mdslite_core::{Edge, Level, LogEvent, PhaseName, Timestamp};
use thiserror::Error;

use crate::clock;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("event sink is closed")]
    SinkClosed,
    #[error("event cannot be written as one line: {0}")]
    Invalid(#[from] mdslite_core::LogError),
    #[error("log io: {0}")]
    Io(#[from] io::Error),
}

enum State {
    Memory(Vec<LogEvent>),
    File(BufWriter<File>),
    Closed,
}

/// Thread-safe event sink. Lines are formatted outside the lock, so
/// concurrent emitters only contend on the append itself.
pub struct EventSink {
    state: Mutex<State>,
    path: Option<PathBuf>,
    closed: AtomicBool,
}

impl EventSink {
    pub fn memory() -> Arc<Self> {
        Arc::new(Self { state: Mutex::new(State::Memory(Vec::new())), path: None, closed: AtomicBool::new(false) })
    }

    /// Appends to `path`, creating it if needed.
    pub fn file(path: impl AsRef<Path>) -> io::Result<Arc<Self>> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let f = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Arc::new(Self {
            state: Mutex::new(State::File(BufWriter::with_capacity(1 << 16, f))),
            path: Some(path),
            closed: AtomicBool::new(false),
        }))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn emit(&self, event: LogEvent) -> Result<(), SinkError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(SinkError::SinkClosed);
        }
        event.validate()?;
        if self.path.is_none() {
            return match &mut *self.state.lock().unwrap() {
                State::Memory(v) => {
                    v.push(event);
                    Ok(())
                }
                _ => Err(SinkError::SinkClosed),
            };
        }
        let mut line = String::with_capacity(160);
        event.write_line(&mut line);
        line.push('\n');
        match &mut *self.state.lock().unwrap() {
            State::File(w) => Ok(w.write_all(line.as_bytes())?),
            _ => Err(SinkError::SinkClosed),
        }
    }

    pub fn flush(&self) -> io::Result<()> {
        match &mut *self.state.lock().unwrap() {
            State::File(w) => w.flush(),
            _ => Ok(()),
        }
    }

    /// Flushes and refuses further events. Memory sinks keep their contents.
    pub fn close(&self) -> io::Result<()> {
        self.closed.store(true, Ordering::Release);
        let mut state = self.state.lock().unwrap();
        match std::mem::replace(&mut *state, State::Closed) {
            State::File(mut w) => w.flush(),
            State::Memory(v) => {
                *state = State::Memory(v);
                Ok(())
            }
            State::Closed => Ok(()),
        }
    }

    /// Everything written so far. File sinks are flushed and re-read.
    pub fn events(&self) -> io::Result<Vec<LogEvent>> {
        {
            let mut state = self.state.lock().unwrap();
            match &mut *state {
                State::Memory(v) => return Ok(v.clone()),
                State::File(w) => w.flush()?,
                State::Closed => {}
            }
        }
        match &self.path {
            Some(p) => Ok(parse_log(&std::fs::read_to_string(p)?).events),
            None => Ok(Vec::new()),
        }
    }
}

/// Event emitter bound to one host/program pair.
#[derive(Clone)]
pub struct Logger {
    sink: Arc<EventSink>,
    host: Arc<str>,
    prog: Arc<str>,
}

impl Logger {
    pub fn new(sink: Arc<EventSink>, host: &str, prog: &str) -> Self {
        Self { sink, host: token(host).into(), prog: token(prog).into() }
    }

    pub fn sink(&self) -> &Arc<EventSink> {
        &self.sink
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn with_prog(&self, prog: &str) -> Self {
        Self { sink: self.sink.clone(), host: self.host.clone(), prog: token(prog).into() }
    }

    pub fn event(&self, ts: Timestamp, lvl: Level, evnt: &str, qid: &str, extra: &[(&str, String)]) {
        let event = LogEvent {
            ts,
            host: self.host.to_string(),
            prog: self.prog.to_string(),
            lvl,
            evnt: evnt.to_owned(),
            qid: if qid.is_empty() { "-".to_owned() } else { qid.to_owned() },
            extra: extra.iter().map(|(k, v)| ((*k).to_owned(), token(v))).collect(),
        };
        if let Err(e) = self.sink.emit(event) {
            log::warn!("dropping event {evnt}: {e}");
        }
    }

    pub fn phase(&self, qid: &str, phase: PhaseName, edge: Edge, ts: Timestamp) {
        self.event(ts, Level::Info, &marker_name(phase, edge), qid, &[]);
    }

    pub fn marker(&self, qid: &str, evnt: &str, extra: &[(&str, String)]) -> Timestamp {
        let ts = clock::now();
        self.event(ts, Level::Info, evnt, qid, extra);
        ts
    }

    pub fn error(&self, qid: &str, evnt: &str, extra: &[(&str, String)]) {
        self.event(clock::now(), Level::Error, evnt, qid, extra);
    }
}

/// Replaces whitespace so that any label fits in one log token.
fn token(s: &str) -> String {
    if s.is_empty() {
        return "-".into();
    }
    s.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

/// Contiguous phase sequence: each transition uses one timestamp as the end
/// of the current phase and the start of the next.
pub struct PhaseTrack<'a> {
    logger: &'a Logger,
    qid: &'a str,
    current: Option<PhaseName>,
}

impl<'a> PhaseTrack<'a> {
    pub fn begin(logger: &'a Logger, qid: &'a str, phase: PhaseName, ts: Timestamp) -> Self {
        logger.phase(qid, phase, Edge::Start, ts);
        Self { logger, qid, current: Some(phase) }
    }

    pub fn advance(&mut self, next: PhaseName) -> Timestamp {
        let ts = clock::now();
        self.advance_at(next, ts);
        ts
    }

    pub fn advance_at(&mut self, next: PhaseName, ts: Timestamp) {
        if let Some(p) = self.current {
            self.logger.phase(self.qid, p, Edge::End, ts);
        }
        self.logger.phase(self.qid, next, Edge::Start, ts);
        self.current = Some(next);
    }

    pub fn finish(mut self) -> Timestamp {
        let ts = clock::now();
        if let Some(p) = self.current.take() {
            self.logger.phase(self.qid, p, Edge::End, ts);
        }
        ts
    }
}

impl Drop for PhaseTrack<'_> {
    fn drop(&mut self) {
        if let Some(p) = self.current.take() {
            self.logger.phase(self.qid, p, Edge::End, clock::now());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdslite_core::correlate;

    #[test]
    fn closed_sink_rejects() {
        let s = EventSink::memory();
        let l = Logger::new(s.clone(), "h", "p");
        l.marker("q", "x", &[]);
        s.close().unwrap();
        assert_eq!(s.events().unwrap().len(), 1);
        let ev = s.events().unwrap().remove(0);
        assert!(matches!(s.emit(ev), Err(SinkError::SinkClosed)));
    }

    #[test]
    fn file_sink_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = EventSink::file(dir.path().join("a/log.txt")).unwrap();
        let l = Logger::new(s.clone(), "host one", "gris");
        l.marker("q-1", "hello", &[("k", "v w".into())]);
        let evs = s.events().unwrap();
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].host, "host_one");
        assert_eq!(evs[0].extra("k"), Some("v_w"));
        s.close().unwrap();
        assert!(matches!(s.emit(evs[0].clone()), Err(SinkError::SinkClosed)));
    }

    #[test]
    fn phase_track_is_contiguous() {
        let s = EventSink::memory();
        let l = Logger::new(s.clone(), "h", "gris");
        {
            let mut t = PhaseTrack::begin(&l, "q", PhaseName::ServerInitSearch, clock::now());
            t.advance(PhaseName::ServerSearchIndex);
            t.advance(PhaseName::ServerInvoking);
            t.advance(PhaseName::ServerGenResult);
            t.finish();
        }
        let evs = s.events().unwrap();
        assert_eq!(evs.len(), 8);
        for pair in evs[1..7].chunks(2) {
            assert_eq!(pair[0].ts, pair[1].ts);
        }
        assert!(correlate(&evs).complete.is_empty());
    }
}
