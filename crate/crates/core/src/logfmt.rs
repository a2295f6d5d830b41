//! Line-oriented event log format.
//!
//! ```text
//! TS=2025-10-16T13:58:00.123456Z HOST=lucky7 PROG=gris LVL=INFO EVNT=Server-Invoking.start QID=q-3-17 provider=p0
//! ```
//!
//! The six leading fields are mandatory and appear in this order. Extra
//! `KEY=VALUE` pairs follow; no token may contain whitespace.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::LogError;
use crate::phase::{phase_marker, Edge, PhaseName};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Info,
    Error,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Info => "INFO",
            Level::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    pub ts: Timestamp,
    pub host: String,
    pub prog: String,
    pub lvl: Level,
    pub evnt: String,
    pub qid: String,
    pub extra: Vec<(String, String)>,
}

fn check_token(tok: &str) -> Result<(), LogError> {
    if tok.is_empty() || tok.chars().any(char::is_whitespace) {
        return Err(LogError::BadToken(tok.to_string()));
    }
    Ok(())
}

impl LogEvent {
    pub fn phase(&self) -> Option<(PhaseName, Edge)> {
        phase_marker(&self.evnt)
    }

    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Checks that every field can be written as a single token.
    pub fn validate(&self) -> Result<(), LogError> {
        check_token(&self.host)?;
        check_token(&self.prog)?;
        check_token(&self.evnt)?;
        check_token(&self.qid)?;
        for (k, v) in &self.extra {
            check_token(k)?;
            if k.contains('=') {
                return Err(LogError::BadToken(k.clone()));
            }
            if v.chars().any(char::is_whitespace) {
                return Err(LogError::BadToken(v.clone()));
            }
        }
        Ok(())
    }

    /// Appends the serialized line (without newline).
    pub fn write_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "TS={} HOST={} PROG={} LVL={} EVNT={} QID={}",
            self.ts,
            self.host,
            self.prog,
            self.lvl.as_str(),
            self.evnt,
            self.qid
        );
        for (k, v) in &self.extra {
            let _ = write!(out, " {k}={v}");
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = String::with_capacity(128);
        self.write_line(&mut s);
        s
    }

    pub fn parse_line(line: &str) -> Result<LogEvent, LogError> {
        let mut toks = line.split(' ');
        let mut field = |key: &'static str| -> Result<&str, LogError> {
            let tok = toks.next().ok_or(LogError::Malformed("missing field"))?;
            let (k, v) = tok.split_once('=').ok_or(LogError::Malformed("token without '='"))?;
            if k != key {
                return Err(LogError::Malformed("fields out of order"));
            }
            check_token(v).map_err(|_| LogError::Malformed("empty field"))?;
            Ok(v)
        };
        let ts = Timestamp::parse_rfc3339(field("TS")?).ok_or(LogError::Malformed("bad timestamp"))?;
        let host = field("HOST")?.to_string();
        let prog = field("PROG")?.to_string();
        let lvl = match field("LVL")? {
            "INFO" => Level::Info,
            "ERROR" => Level::Error,
            _ => return Err(LogError::Malformed("bad level")),
        };
        let evnt = field("EVNT")?.to_string();
        let qid = field("QID")?.to_string();
        let mut extra = Vec::new();
        for tok in toks {
            let (k, v) = tok.split_once('=').ok_or(LogError::Malformed("extra without '='"))?;
            if k.is_empty() || tok.contains(char::is_whitespace) {
                return Err(LogError::Malformed("bad extra token"));
            }
            extra.push((k.to_string(), v.to_string()));
        }
        Ok(LogEvent { ts, host, prog, lvl, evnt, qid, extra })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    pub line: usize,
    pub error: LogError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedLog {
    pub events: Vec<LogEvent>,
    pub diagnostics: Vec<LineDiagnostic>,
}

/// Parses a whole log; malformed lines become diagnostics, blank lines are skipped.
pub fn parse_log(text: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        match LogEvent::parse_line(line) {
            Ok(e) => out.events.push(e),
            Err(error) => out.diagnostics.push(LineDiagnostic { line: i + 1, error }),
        }
    }
    out
}

pub fn serialize_log<'a>(events: impl IntoIterator<Item = &'a LogEvent>) -> String {
    let mut out = String::new();
    for e in events {
        e.write_line(&mut out);
        out.push('\n');
    }
    out
}
