//! Length-prefixed text protocol.
//!
//! A frame is a 4-byte big-endian payload length followed by that many bytes
//! of UTF-8. The payload is a message:
//!
//! ```text
//! MDSLITE/1 SEARCH
//! base: mds-vo-name=local
//! scope: sub
//! filter: (objectclass=*)
//! attrs: *
//! qid: q-1
//!
//! <body>
//! ```

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::entry::{parse_ldif, write_ldif_all, AttrSelection, Entry};
use crate::error::WireError;
use crate::filter::Filter;
use crate::index::SearchRequest;
use crate::name::{EntryName, Scope};

pub const PROTOCOL: &str = "MDSLITE/1";
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageKind {
    Bind,
    BindOk,
    BindErr,
    Search,
    Result,
    Register,
    RegisterOk,
    Error,
    Unbind,
    /// A type this implementation does not know; kept verbatim.
    Unknown(String),
}

impl MessageKind {
    pub fn as_str(&self) -> &str {
        match self {
            MessageKind::Bind => "BIND",
            MessageKind::BindOk => "BIND-OK",
            MessageKind::BindErr => "BIND-ERR",
            MessageKind::Search => "SEARCH",
            MessageKind::Result => "RESULT",
            MessageKind::Register => "REGISTER",
            MessageKind::RegisterOk => "REGISTER-OK",
            MessageKind::Error => "ERROR",
            MessageKind::Unbind => "UNBIND",
            MessageKind::Unknown(s) => s,
        }
    }

    fn parse(s: &str) -> Self {
        match s {
            "BIND" => MessageKind::Bind,
            "BIND-OK" => MessageKind::BindOk,
            "BIND-ERR" => MessageKind::BindErr,
            "SEARCH" => MessageKind::Search,
            "RESULT" => MessageKind::Result,
            "REGISTER" => MessageKind::Register,
            "REGISTER-OK" => MessageKind::RegisterOk,
            "ERROR" => MessageKind::Error,
            "UNBIND" => MessageKind::Unbind,
            other => MessageKind::Unknown(other.to_owned()),
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

fn malformed(reason: impl Into<String>) -> WireError {
    WireError::MalformedMessage(reason.into())
}

impl Message {
    pub fn new(kind: MessageKind) -> Self {
        Self { kind, headers: Vec::new(), body: String::new() }
    }

    pub fn header(mut self, key: &str, value: impl Into<String>) -> Self {
        self.headers.push((key.to_owned(), value.into()));
        self
    }

    pub fn with_body(mut self, body: impl Into<String>) -> Self {
        self.body = body.into();
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &'static str) -> Result<&str, WireError> {
        self.get(key).ok_or_else(|| malformed(format!("{} without {key} header", self.kind)))
    }

    /// Serializes to payload text; rejects fields that cannot be represented.
    pub fn to_text(&self) -> Result<String, WireError> {
        let kind = self.kind.as_str();
        if kind.is_empty() || kind.contains(char::is_whitespace) {
            return Err(malformed("message type must be a non-empty token"));
        }
        let mut out = String::with_capacity(64 + self.body.len());
        out.push_str(PROTOCOL);
        out.push(' ');
        out.push_str(kind);
        out.push('\n');
        for (k, v) in &self.headers {
            if k.is_empty() || k.contains([':', '\n', '\r']) || v.contains(['\n', '\r']) {
                return Err(malformed(format!("unrepresentable header {k:?}")));
            }
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&self.body);
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self, WireError> {
        let (first, mut rest) = text.split_once('\n').ok_or_else(|| malformed("missing protocol line"))?;
        let kind = first
            .strip_prefix(PROTOCOL)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| malformed("bad protocol line"))?;
        if kind.is_empty() || kind.contains(char::is_whitespace) {
            return Err(malformed("bad message type"));
        }
        let mut headers = Vec::new();
        loop {
            let (line, tail) = rest.split_once('\n').ok_or_else(|| malformed("missing blank separator"))?;
            rest = tail;
            if line.is_empty() {
                break;
            }
            let (k, v) = line.split_once(": ").ok_or_else(|| malformed("bad header line"))?;
            if k.is_empty() || k.contains(':') {
                return Err(malformed("bad header key"));
            }
            headers.push((k.to_owned(), v.to_owned()));
        }
        Ok(Self { kind: MessageKind::parse(kind), headers, body: rest.to_owned() })
    }
}

/// A length-prefixed frame as it travels on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame(Vec<u8>);

impl Frame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn from_payload(payload: &[u8]) -> Result<Self, WireError> {
        if payload.len() > MAX_FRAME {
            return Err(WireError::Oversize(payload.len()));
        }
        let mut bytes = Vec::with_capacity(4 + payload.len());
        bytes.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        bytes.extend_from_slice(payload);
        Ok(Frame(bytes))
    }

    /// Validates a complete frame: the declared length must equal the
    /// number of payload bytes present.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, WireError> {
        let declared = declared_length(&bytes)?;
        if declared > MAX_FRAME {
            return Err(WireError::Oversize(declared));
        }
        if bytes.len() - 4 != declared {
            return Err(WireError::MalformedFrame("declared length does not match payload"));
        }
        Ok(Frame(bytes))
    }

    pub fn payload(&self) -> &[u8] {
        &self.0[4..]
    }
}

/// Reads the big-endian length prefix.
pub fn declared_length(bytes: &[u8]) -> Result<usize, WireError> {
    let head: [u8; 4] = bytes
        .get(..4)
        .and_then(|h| h.try_into().ok())
        .ok_or(WireError::MalformedFrame("short length prefix"))?;
    Ok(u32::from_be_bytes(head) as usize)
}

pub fn encode(message: &Message) -> Result<Frame, WireError> {
    Frame::from_payload(message.to_text()?.as_bytes())
}

pub fn decode(frame: &Frame) -> Result<Message, WireError> {
    let text = core::str::from_utf8(frame.payload()).map_err(|_| WireError::MalformedFrame("payload is not UTF-8"))?;
    Message::from_text(text)
}

/// Shared-secret credential presented in BIND.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub identity: String,
    pub secret: String,
}

impl Credential {
    pub fn new(identity: impl Into<String>, secret: impl Into<String>) -> Option<Self> {
        let identity = identity.into();
        (!identity.is_empty()).then(|| Self { identity, secret: secret.into() })
    }

    pub fn to_message(&self) -> Message {
        Message::new(MessageKind::Bind)
            .header("identity", self.identity.clone())
            .header("secret", self.secret.clone())
    }

    pub fn from_message(m: &Message) -> Result<Self, WireError> {
        Credential::new(m.require("identity")?, m.require("secret")?)
            .ok_or_else(|| malformed("empty bind identity"))
    }
}

pub fn search_message(req: &SearchRequest) -> Message {
    Message::new(MessageKind::Search)
        .header("base", req.base.to_string())
        .header("scope", req.scope.as_str())
        .header("filter", req.filter.to_string())
        .header("attrs", req.attrs.to_text())
        .header("qid", req.qid.clone())
}

pub fn parse_search(m: &Message) -> Result<SearchRequest, WireError> {
    let base = EntryName::parse(m.require("base")?).map_err(|e| malformed(format!("base: {e}")))?;
    let scope: Scope = m.require("scope")?.parse().map_err(|_| malformed("bad scope"))?;
    let filter = Filter::parse(m.require("filter")?).map_err(|e| malformed(format!("filter: {e}")))?;
    let attrs = AttrSelection::parse(m.require("attrs")?);
    let qid = m.require("qid")?;
    if qid.is_empty() || qid.contains(char::is_whitespace) {
        return Err(malformed("bad qid"));
    }
    Ok(SearchRequest { base, scope, filter, attrs, qid: qid.to_owned() })
}

pub fn result_message(qid: &str, entries: &[Entry]) -> Message {
    result_message_with_body(qid, entries.len(), write_ldif_all(entries))
}

/// RESULT from an already serialized LDIF body of `count` entries.
pub fn result_message_with_body(qid: &str, count: usize, body: String) -> Message {
    Message::new(MessageKind::Result)
        .header("qid", qid)
        .header("status", "ok")
        .header("count", count.to_string())
        .with_body(body)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub qid: String,
    pub entries: Vec<Entry>,
}

/// Parses a RESULT, checking that `count` matches the body.
pub fn parse_result(m: &Message) -> Result<SearchResult, WireError> {
    let qid = m.require("qid")?.to_owned();
    let count: usize = m.require("count")?.parse().map_err(|_| malformed("bad count"))?;
    let entries = parse_ldif(&m.body).map_err(|e| malformed(format!("body: {e}")))?;
    if entries.len() != count {
        return Err(malformed(format!("count header {count} but body has {} entries", entries.len())));
    }
    Ok(SearchResult { qid, entries })
}

pub fn error_message(reason: &str) -> Message {
    Message::new(MessageKind::Error).header("reason", reason.replace(['\n', '\r'], " "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterRequest {
    pub endpoint: String,
    pub suffix: EntryName,
    pub ttl_secs: f64,
}

pub fn register_message(r: &RegisterRequest) -> Message {
    Message::new(MessageKind::Register)
        .header("endpoint", r.endpoint.clone())
        .header("suffix", r.suffix.to_string())
        .header("ttl-seconds", format!("{}", r.ttl_secs))
}

pub fn parse_register(m: &Message) -> Result<RegisterRequest, WireError> {
    let endpoint = m.require("endpoint")?;
    if endpoint.is_empty() || endpoint.contains(char::is_whitespace) {
        return Err(malformed("bad endpoint"));
    }
    let suffix = EntryName::parse(m.require("suffix")?).map_err(|e| malformed(format!("suffix: {e}")))?;
    let ttl_secs: f64 = m.require("ttl-seconds")?.parse().map_err(|_| malformed("bad ttl-seconds"))?;
    Ok(RegisterRequest { endpoint: endpoint.to_owned(), suffix, ttl_secs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Timestamp;
    use alloc::vec;

    fn search() -> SearchRequest {
        SearchRequest::full_tree(EntryName::parse("mds-vo-name=local").unwrap(), "q-1")
    }

    #[test]
    fn search_round_trip() {
        let m = search_message(&search());
        let frame = encode(&m).unwrap();
        let back = decode(&frame).unwrap();
        assert_eq!(back, m);
        assert_eq!(parse_search(&back).unwrap(), search());
        assert_eq!(
            m.to_text().unwrap(),
            "MDSLITE/1 SEARCH\nbase: mds-vo-name=local\nscope: sub\nfilter: (objectclass=*)\nattrs: *\nqid: q-1\n\n"
        );
    }

    #[test]
    fn length_mismatch_is_malformed() {
        let mut bytes = encode(&search_message(&search())).unwrap().into_bytes();
        bytes.push(b'x');
        assert!(matches!(Frame::from_bytes(bytes), Err(WireError::MalformedFrame(_))));
        assert!(matches!(Frame::from_bytes(vec![0, 0]), Err(WireError::MalformedFrame(_))));
    }

    #[test]
    fn oversize_rejected() {
        let big = "x".repeat(MAX_FRAME + 1);
        let m = Message::new(MessageKind::Result).with_body(big);
        assert!(matches!(encode(&m), Err(WireError::Oversize(_))));
        let mut bytes = ((MAX_FRAME + 1) as u32).to_be_bytes().to_vec();
        bytes.extend_from_slice(b"abc");
        assert!(matches!(Frame::from_bytes(bytes), Err(WireError::Oversize(_))));
    }

    #[test]
    fn unknown_type_preserved() {
        let m = Message::new(MessageKind::Unknown("PING".into())).header("x", "y");
        let back = decode(&encode(&m).unwrap()).unwrap();
        assert_eq!(back.kind, MessageKind::Unknown("PING".into()));
        assert_eq!(back, m);
    }

    #[test]
    fn result_count_checked() {
        let e = Entry::builder(EntryName::parse("a=b").unwrap(), Timestamp(5))
            .attr("objectclass", "x")
            .build()
            .unwrap();
        let m = result_message("q", &[e.clone(), e.clone()]);
        assert_eq!(parse_result(&m).unwrap().entries.len(), 2);
        let mut bad = m.clone();
        bad.headers[2].1 = "3".into();
        assert!(parse_result(&bad).is_err());
    }

    #[test]
    fn register_round_trip() {
        let r = RegisterRequest {
            endpoint: "127.0.0.1:2135".into(),
            suffix: EntryName::parse("mds-host-name=a, mds-vo-name=local").unwrap(),
            ttl_secs: 30.0,
        };
        assert_eq!(parse_register(&decode(&encode(&register_message(&r)).unwrap()).unwrap()).unwrap(), r);
    }

    #[test]
    fn header_values_may_start_with_space() {
        let m = Message::new(MessageKind::Error).header("reason", " padded");
        assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn bad_protocol_line() {
        assert!(Message::from_text("HTTP/1.1 GET\n\n").is_err());
        assert!(Message::from_text("MDSLITE/1 BIND\nidentity: a\n").is_err());
    }
}
