//! Framed TCP transport: the instrumented query client and the
//! thread-per-connection server loop.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use mdslite_core::wire::{self, error_message, parse_result, search_message, MAX_FRAME};
use mdslite_core::{Credential, Edge, Entry, Message, MessageKind, Micros, PhaseName, SearchRequest, Timestamp, WireError};
use thiserror::Error;

use crate::clock;
use crate::sink::Logger;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
}

pub fn write_message(w: &mut impl Write, m: &Message) -> Result<(), NetError> {
    let frame = wire::encode(m)?;
    w.write_all(frame.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads a frame length. `None` on a clean end of stream.
pub fn read_header(r: &mut impl Read) -> Result<Option<usize>, NetError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(WireError::Oversize(n).into());
    }
    Ok(Some(n))
}

pub fn read_body(r: &mut impl Read, len: usize) -> Result<Message, NetError> {
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    let text = std::str::from_utf8(&payload).map_err(|_| WireError::MalformedFrame("payload is not UTF-8"))?;
    Ok(Message::from_text(text)?)
}

pub fn read_message(r: &mut impl Read) -> Result<Option<Message>, NetError> {
    match read_header(r)? {
        Some(n) => read_body(r, n).map(Some),
        None => Ok(None),
    }
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self { timeout: DEFAULT_TIMEOUT }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connect to {0} failed: {1}")]
    ConnectFailed(String, String),
    #[error("bind rejected: {0}")]
    BindRejected(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("server error: {0}")]
    ServerError(String),
    #[error("timed out")]
    Timeout,
}

impl ClientError {
    /// Short class label used in error tallies.
    pub fn class(&self) -> &'static str {
        match self {
            ClientError::ConnectFailed(..) => "connect",
            ClientError::BindRejected(_) => "bind",
            ClientError::ProtocolError(_) => "protocol",
            ClientError::ServerError(_) => "server",
            ClientError::Timeout => "timeout",
        }
    }
}

impl From<NetError> for ClientError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Io(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => ClientError::Timeout,
            other => ClientError::ProtocolError(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub entries: Vec<Entry>,
    pub started: Timestamp,
    pub finished: Timestamp,
    /// Size of the RESULT payload in bytes.
    pub response_bytes: usize,
}

impl QueryOutcome {
    pub fn ort(&self) -> Micros {
        self.finished - self.started
    }
}

fn connect(endpoint: &str, timeout: Duration) -> Result<TcpStream, ClientError> {
    let fail = |e: String| ClientError::ConnectFailed(endpoint.to_owned(), e);
    let addr = endpoint
        .to_socket_addrs()
        .map_err(|e| fail(e.to_string()))?
        .next()
        .ok_or_else(|| fail("no address".into()))?;
    let s = TcpStream::connect_timeout(&addr, timeout).map_err(|e| fail(e.to_string()))?;
    s.set_nodelay(true).map_err(|e| fail(e.to_string()))?;
    s.set_read_timeout(Some(timeout)).map_err(|e| fail(e.to_string()))?;
    s.set_write_timeout(Some(timeout)).map_err(|e| fail(e.to_string()))?;
    Ok(s)
}

fn bind(s: &mut TcpStream, cred: &Credential) -> Result<(), ClientError> {
    write_message(s, &cred.to_message())?;
    let reply = read_message(s)?.ok_or_else(|| ClientError::ProtocolError("closed during bind".into()))?;
    match reply.kind {
        MessageKind::BindOk => Ok(()),
        MessageKind::BindErr | MessageKind::Error => {
            Err(ClientError::BindRejected(reply.get("reason").unwrap_or("rejected").to_owned()))
        }
        other => Err(ClientError::ProtocolError(format!("unexpected {} during bind", other.as_str()))),
    }
}

/// Sends SEARCH and reads the RESULT. `on_first_byte` fires as soon as the
/// response length prefix arrives.
fn exchange(
    s: &mut TcpStream,
    req: &SearchRequest,
    on_first_byte: impl FnOnce(Timestamp),
) -> Result<(Vec<Entry>, usize), ClientError> {
    write_message(s, &search_message(req))?;
    let len = read_header(s)?.ok_or_else(|| ClientError::ProtocolError("closed before result".into()))?;
    on_first_byte(clock::now());
    let reply = read_body(s, len)?;
    match reply.kind {
        MessageKind::Result => {
            let r = parse_result(&reply).map_err(|e| ClientError::ProtocolError(e.to_string()))?;
            if r.qid != req.qid {
                return Err(ClientError::ProtocolError(format!("result for {} not {}", r.qid, req.qid)));
            }
            Ok((r.entries, len))
        }
        MessageKind::Error => Err(ClientError::ServerError(reply.get("reason").unwrap_or("unspecified").to_owned())),
        other => Err(ClientError::ProtocolError(format!("unexpected {}", other.as_str()))),
    }
}

/// One complete query on a fresh connection: connect, bind, search,
/// unbind, close. When a logger is given the three client phases are
/// logged under the request's qid; Client-EndConnect.end is written only
/// on success.
pub fn client_query(
    endpoint: &str,
    cred: &Credential,
    req: &SearchRequest,
    logger: Option<&Logger>,
    opts: &ClientOptions,
) -> Result<QueryOutcome, ClientError> {
    let log = |p: PhaseName, e: Edge, ts: Timestamp| {
        if let Some(l) = logger {
            l.phase(&req.qid, p, e, ts);
        }
    };
    let started = clock::now();
    log(PhaseName::ClientConnect, Edge::Start, started);
    let mut s = connect(endpoint, opts.timeout)?;
    let t = clock::now();
    log(PhaseName::ClientConnect, Edge::End, t);
    log(PhaseName::ClientBind, Edge::Start, t);
    let bound = bind(&mut s, cred);
    log(PhaseName::ClientBind, Edge::End, clock::now());
    bound?;
    let (entries, response_bytes) = exchange(&mut s, req, |ts| log(PhaseName::ClientEndConnect, Edge::Start, ts))?;
    let _ = write_message(&mut s, &Message::new(MessageKind::Unbind));
    let _ = s.shutdown(Shutdown::Both);
    drop(s);
    let finished = clock::now();
    log(PhaseName::ClientEndConnect, Edge::End, finished);
    Ok(QueryOutcome { entries, started, finished, response_bytes })
}

/// A bound connection reused across queries. Each query logs zero-length
/// connect and bind phases at its start.
pub struct Session {
    stream: TcpStream,
}

impl Session {
    pub fn open(endpoint: &str, cred: &Credential, opts: &ClientOptions) -> Result<Self, ClientError> {
        let mut stream = connect(endpoint, opts.timeout)?;
        bind(&mut stream, cred)?;
        Ok(Self { stream })
    }

    pub fn query(&mut self, req: &SearchRequest, logger: Option<&Logger>) -> Result<QueryOutcome, ClientError> {
        let started = clock::now();
        if let Some(l) = logger {
            for p in [PhaseName::ClientConnect, PhaseName::ClientBind] {
                l.phase(&req.qid, p, Edge::Start, started);
                l.phase(&req.qid, p, Edge::End, started);
            }
        }
        let (entries, response_bytes) = exchange(&mut self.stream, req, |ts| {
            if let Some(l) = logger {
                l.phase(&req.qid, PhaseName::ClientEndConnect, Edge::Start, ts);
            }
        })?;
        let finished = clock::now();
        if let Some(l) = logger {
            l.phase(&req.qid, PhaseName::ClientEndConnect, Edge::End, finished);
        }
        Ok(QueryOutcome { entries, started, finished, response_bytes })
    }

    pub fn close(mut self) {
        let _ = write_message(&mut self.stream, &Message::new(MessageKind::Unbind));
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// Sends one REGISTER on a fresh connection. No bind is required.
pub fn send_register(endpoint: &str, req: &wire::RegisterRequest, timeout: Duration) -> Result<(), ClientError> {
    let mut s = connect(endpoint, timeout)?;
    write_message(&mut s, &wire::register_message(req))?;
    let reply = read_message(&mut s)?.ok_or_else(|| ClientError::ProtocolError("closed during register".into()))?;
    let _ = s.shutdown(Shutdown::Both);
    match reply.kind {
        MessageKind::RegisterOk => Ok(()),
        MessageKind::Error => Err(ClientError::ServerError(reply.get("reason").unwrap_or("rejected").to_owned())),
        other => Err(ClientError::ProtocolError(format!("unexpected {}", other.as_str()))),
    }
}

/// Request handling supplied by a service.
pub trait Handler: Send + Sync + 'static {
    /// Handles one SEARCH whose frame was fully read at `received`. The
    /// returned message is written back after this returns.
    fn search(&self, request: &Message, received: Timestamp) -> Message;

    fn register(&self, _request: &Message) -> Message {
        error_message("registration is not accepted here")
    }
}

/// Shared-secret bind check.
#[derive(Debug, Clone)]
pub struct Auth {
    pub secret: String,
}

impl Auth {
    pub fn accepts(&self, cred: &Credential) -> bool {
        !cred.identity.is_empty() && cred.secret == self.secret
    }
}

/// Address clients should dial: unspecified listen addresses become loopback.
pub fn advertised(addr: SocketAddr) -> String {
    let mut a = addr;
    if a.ip().is_unspecified() {
        a.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
    }
    a.to_string()
}

type ConnList = Arc<Mutex<Vec<(TcpStream, JoinHandle<()>)>>>;

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    conns: ConnList,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        advertised(self.addr)
    }

    /// Stops accepting, lets in-flight requests finish, then joins every
    /// connection thread.
    pub fn shutdown(&mut self) {
        let Some(accept) = self.accept.take() else { return };
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        let _ = accept.join();
        let conns = std::mem::take(&mut *self.conns.lock().unwrap());
        for (s, _) in &conns {
            let _ = s.shutdown(Shutdown::Read);
        }
        for (_, h) in conns {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn serve(listen: &str, auth: Auth, handler: Arc<dyn Handler>) -> io::Result<ServerHandle> {
    serve_listener(TcpListener::bind(listen)?, auth, handler)
}

pub fn serve_listener(listener: TcpListener, auth: Auth, handler: Arc<dyn Handler>) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let conns: ConnList = Arc::default();
    let accept = {
        let stop = stop.clone();
        let conns = conns.clone();
        thread::Builder::new().name(format!("accept-{addr}")).spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match stream {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("accept on {addr}: {e}");
                        continue;
                    }
                };
                let Ok(watch) = stream.try_clone() else { continue };
                let handler = handler.clone();
                let auth = auth.clone();
                let spawned = thread::Builder::new()
                    .name("conn".into())
                    .spawn(move || serve_connection(stream, &auth, handler.as_ref()));
                match spawned {
                    Ok(h) => {
                        let mut list = conns.lock().unwrap();
                        list.retain(|(_, h)| !h.is_finished());
                        list.push((watch, h));
                    }
                    Err(e) => log::warn!("spawn connection thread: {e}"),
                }
            }
        })?
    };
    Ok(ServerHandle { addr, stop, accept: Some(accept), conns })
}

fn serve_connection(mut s: TcpStream, auth: &Auth, handler: &dyn Handler) {
    let _ = s.set_nodelay(true);
    let mut bound = false;
    loop {
        let len = match read_header(&mut s) {
            Ok(Some(n)) => n,
            Ok(None) => return,
            Err(e) => {
                let _ = write_message(&mut s, &error_message(&e.to_string()));
                return;
            }
        };
        let request = read_body(&mut s, len);
        let received = clock::now();
        let request = match request {
            Ok(m) => m,
            Err(e) => {
                let _ = write_message(&mut s, &error_message(&e.to_string()));
                return;
            }
        };
        let (reply, close) = match request.kind {
            MessageKind::Bind => match Credential::from_message(&request) {
                Ok(c) if auth.accepts(&c) => {
                    bound = true;
                    (Message::new(MessageKind::BindOk), false)
                }
                Ok(_) => (Message::new(MessageKind::BindErr).header("reason", "invalid credentials"), true),
                Err(e) => (Message::new(MessageKind::BindErr).header("reason", e.to_string()), true),
            },
            MessageKind::Search if bound => (handler.search(&request, received), false),
            MessageKind::Search => (error_message("search before bind"), true),
            MessageKind::Register => (handler.register(&request), false),
            MessageKind::Unbind => return,
            ref other => (error_message(&format!("unexpected {}", other.as_str())), true),
        };
        if write_message(&mut s, &reply).is_err() || close {
            let _ = s.shutdown(Shutdown::Both);
            return;
        }
    }
}
