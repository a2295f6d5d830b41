//! Aggregate directory: keeps a soft-state table of registered resource
//! servers and answers searches over their merged, cached contents.

use std::collections::{BTreeMap, HashMap};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use mdslite_core::index::finish_results;
use mdslite_core::wire::{error_message, parse_register, parse_search, result_message};
use mdslite_core::{
    build_index, CacheRecord, Credential, Entry, EntryName, Message, MessageKind, PhaseName, Registration, Registry, Scope,
    SearchError, SearchIndex, SearchRequest, Timestamp, Ttl,
};

use crate::clock;
use crate::config::{self, ConfigError};
use crate::gris::{GrisError, DEFAULT_SECRET};
use crate::net::{self, advertised, client_query, Auth, ClientOptions, Handler, ServerHandle};
use crate::sink::{EventSink, Logger, PhaseTrack};

#[derive(Debug, Clone)]
pub struct GiisConfig {
    pub suffix: EntryName,
    pub cache_ttl: Ttl,
    pub sweep_interval: Duration,
    pub listen: String,
    pub log: Option<PathBuf>,
    pub secret: String,
    /// Credential presented to registered servers.
    pub client: Credential,
    pub query_timeout: Duration,
    pub host_label: Option<String>,
}

impl GiisConfig {
    pub fn new(suffix: EntryName, cache_ttl: Ttl, sweep_interval: Duration) -> Self {
        Self {
            suffix,
            cache_ttl,
            sweep_interval,
            listen: "127.0.0.1:0".into(),
            log: None,
            secret: DEFAULT_SECRET.into(),
            client: Credential::new("giis", DEFAULT_SECRET).expect("non-empty identity"),
            query_timeout: Duration::from_secs(60),
            host_label: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&config::read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let lines = config::lines(text)?;
        let suffix_line = lines.iter().find(|l| l.key == "suffix").ok_or(ConfigError::Missing("suffix"))?;
        let suffix = EntryName::parse(suffix_line.value).map_err(|e| ConfigError::at(suffix_line.number, e.to_string()))?;
        let mut cfg = Self::new(suffix, Ttl::Finite(mdslite_core::Micros::from_secs_f64(600.0)), Duration::from_secs(10));
        let (mut identity, mut secret) = ("giis".to_owned(), DEFAULT_SECRET.to_owned());
        for l in &lines {
            match l.key {
                "suffix" => {}
                "cache-ttl" => cfg.cache_ttl = l.value.parse().map_err(|e: String| ConfigError::at(l.number, e))?,
                "sweep-interval" => {
                    let secs: f64 = config::number(l)?;
                    if secs.is_nan() || secs <= 0.0 || !secs.is_finite() {
                        return Err(ConfigError::at(l.number, "sweep-interval must be positive"));
                    }
                    cfg.sweep_interval = Duration::from_secs_f64(secs);
                }
                "listen" => cfg.listen = l.value.to_owned(),
                "log" => cfg.log = Some(PathBuf::from(l.value)),
                "secret" => cfg.secret = l.value.to_owned(),
                "client-identity" => identity = l.value.to_owned(),
                "client-secret" => secret = l.value.to_owned(),
                "query-timeout" => cfg.query_timeout = Duration::from_secs_f64(config::number(l)?),
                "host" => cfg.host_label = Some(l.value.to_owned()),
                other => return Err(ConfigError::at(l.number, format!("unknown key {other}"))),
            }
        }
        cfg.client = Credential::new(identity, secret).ok_or_else(|| ConfigError::at(0, "empty client-identity"))?;
        Ok(cfg)
    }
}

type Record = Arc<CacheRecord<SearchIndex>>;

pub struct Giis {
    suffix: EntryName,
    ttl: Ttl,
    client: Credential,
    client_opts: ClientOptions,
    registry: Mutex<Registry>,
    cache: Mutex<HashMap<String, Record>>,
    refresh_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    outbound: AtomicU64,
    sub_seq: AtomicU64,
    logger: Logger,
    client_logger: Logger,
}

impl Giis {
    pub fn new(config: &GiisConfig, logger: Logger) -> Self {
        Self {
            suffix: config.suffix.clone(),
            ttl: config.cache_ttl,
            client: config.client.clone(),
            client_opts: ClientOptions { timeout: config.query_timeout },
            registry: Mutex::new(Registry::new(config.suffix.clone())),
            cache: Mutex::default(),
            refresh_locks: Mutex::default(),
            outbound: AtomicU64::new(0),
            sub_seq: AtomicU64::new(0),
            client_logger: logger.with_prog("giis-client"),
            logger,
        }
    }

    pub fn suffix(&self) -> &EntryName {
        &self.suffix
    }

    /// Queries sent to registered servers so far.
    pub fn outbound_queries(&self) -> u64 {
        self.outbound.load(Ordering::Relaxed)
    }

    pub fn registrations(&self) -> Vec<Registration> {
        self.registry.lock().unwrap().iter().cloned().collect()
    }

    pub fn live_registrations(&self, now: Timestamp) -> Vec<Registration> {
        self.registry.lock().unwrap().live(now).cloned().collect()
    }

    pub fn handle_register(&self, msg: &Message, now: Timestamp) -> Message {
        let req = match parse_register(msg) {
            Ok(r) => r,
            Err(e) => return error_message(&e.to_string()),
        };
        let outcome = self.registry.lock().unwrap().register(&req, now).map(|r| r.key());
        match outcome {
            Ok(_) => {
                self.logger.event(
                    now,
                    mdslite_core::Level::Info,
                    "registration.renewed",
                    "-",
                    &[("endpoint", req.endpoint.clone()), ("suffix", req.suffix.to_string())],
                );
                Message::new(MessageKind::RegisterOk)
            }
            Err(e) => error_message(&e.to_string()),
        }
    }

    /// Removes expired registrations together with their cached data.
    pub fn sweep(&self, now: Timestamp) -> Vec<Registration> {
        let removed = self.registry.lock().unwrap().sweep(now);
        if !removed.is_empty() {
            let mut cache = self.cache.lock().unwrap();
            let mut locks = self.refresh_locks.lock().unwrap();
            for r in &removed {
                cache.remove(&r.key());
                locks.remove(&r.key());
                self.logger.event(now, mdslite_core::Level::Info, "registration.expired", "-", &[("endpoint", r.endpoint.clone())]);
            }
        }
        removed
    }

    fn lookup(&self, key: &str, now: Timestamp) -> Option<Record> {
        self.cache.lock().unwrap().get(key).filter(|r| r.is_fresh(now)).cloned()
    }

    /// Fetches one member's full subtree unless a concurrent refresh already
    /// did. On failure the last record, fresh or not, is used if present.
    fn refresh_one(&self, reg: &Registration, qid: &str) -> Option<Record> {
        let key = reg.key();
        let lock = self.refresh_locks.lock().unwrap().entry(key.clone()).or_default().clone();
        let _turn = lock.lock().unwrap();
        if let Some(r) = self.lookup(&key, clock::now()) {
            return Some(r);
        }
        let subqid = format!("{qid}~{}", self.sub_seq.fetch_add(1, Ordering::Relaxed));
        self.outbound.fetch_add(1, Ordering::Relaxed);
        let req = SearchRequest::full_tree(reg.suffix.clone(), subqid.clone());
        let fetched = client_query(&reg.endpoint, &self.client, &req, Some(&self.client_logger), &self.client_opts)
            .map_err(GrisError::from_client)
            .and_then(|out| {
                let entries = out.entries.into_iter().filter(|e| e.name().is_within(&reg.suffix)).collect();
                Ok(build_index(entries, reg.suffix.clone())?)
            });
        match fetched {
            Ok(index) => {
                let record = Arc::new(CacheRecord { key: key.clone(), value: index, stored_at: clock::now(), ttl: self.ttl });
                let still_registered = self.registry.lock().unwrap().iter().any(|r| r.key() == key);
                if still_registered {
                    self.cache.lock().unwrap().insert(key, record.clone());
                }
                Some(record)
            }
            Err(e) => {
                self.logger.error(&subqid, "refresh.failed", &[("endpoint", reg.endpoint.clone()), ("reason", e.to_string())]);
                self.cache.lock().unwrap().get(&key).cloned()
            }
        }
    }

    fn refresh_all(&self, regs: &[Registration], qid: &str) -> Vec<Record> {
        match regs {
            [] => Vec::new(),
            [one] => self.refresh_one(one, qid).into_iter().collect(),
            _ => std::thread::scope(|s| {
                let handles: Vec<_> = regs.iter().map(|r| s.spawn(move || self.refresh_one(r, qid))).collect();
                handles.into_iter().filter_map(|h| h.join().ok().flatten()).collect()
            }),
        }
    }

    /// Refreshes `regs` and returns their merged entries.
    pub fn aggregate_refresh(&self, regs: &[Registration], qid: &str) -> Vec<Entry> {
        let records = self.refresh_all(regs, qid);
        merge(records.iter().flat_map(|r| r.value.iter()))
    }

    /// Fills the cache for every live registration.
    pub fn warm(&self) -> usize {
        let regs = self.live_registrations(clock::now());
        self.refresh_all(&regs, "warmup").len()
    }

    fn run_search(&self, msg: &Message, qid: &str, track: &mut PhaseTrack<'_>) -> Result<Message, GrisError> {
        // Server-InitSearch
        let req = parse_search(msg)?;
        let (base, scope) = (&req.base, req.scope);
        if !base.is_within(&self.suffix) && !self.suffix.is_within(base) {
            return Err(SearchError::NoSuchBase(base.to_string()).into());
        }
        let now = clock::now();
        let routes = self.registry.lock().unwrap().route(base, scope, now);
        let mut records = Vec::new();
        let mut stale = Vec::new();
        for reg in routes {
            match self.lookup(&reg.key(), now) {
                Some(r) => records.push(r),
                None => stale.push(reg),
            }
        }

        track.advance(PhaseName::ServerSearchIndex);
        let mut candidates: Vec<Entry> = Vec::new();
        for r in &records {
            candidates.extend(r.value.in_scope(base, scope).into_iter().cloned());
        }

        let invoking = track.advance(PhaseName::ServerInvoking);
        if stale.is_empty() {
            track.advance_at(PhaseName::ServerGenResult, invoking);
        } else {
            for r in self.refresh_all(&stale, qid) {
                candidates.extend(r.value.in_scope(base, scope).into_iter().cloned());
                records.push(r);
            }
            track.advance(PhaseName::ServerGenResult);
        }
        if scope != Scope::Subtree && base != &self.suffix && !records.iter().any(|r| r.value.get(base).is_some()) {
            return Err(SearchError::NoSuchBase(base.to_string()).into());
        }
        let merged = merge(candidates.iter());
        let results = finish_results(merged.iter(), &req.filter, &req.attrs);
        Ok(result_message(qid, &results))
    }
}

/// One entry per name, ordered by name; the newest timestamp wins.
fn merge<'a>(entries: impl IntoIterator<Item = &'a Entry>) -> Vec<Entry> {
    let mut by_name: BTreeMap<String, &Entry> = BTreeMap::new();
    for e in entries {
        by_name
            .entry(e.name().to_string())
            .and_modify(|cur| {
                if e.timestamp() > cur.timestamp() {
                    *cur = e;
                }
            })
            .or_insert(e);
    }
    by_name.into_values().cloned().collect()
}

impl Handler for Giis {
    fn search(&self, msg: &Message, received: Timestamp) -> Message {
        let Some(qid) = msg.get("qid").filter(|q| !q.is_empty() && !q.contains(char::is_whitespace)) else {
            return error_message("missing qid");
        };
        let mut track = PhaseTrack::begin(&self.logger, qid, PhaseName::ServerInitSearch, received);
        let reply = self.run_search(msg, qid, &mut track);
        track.finish();
        reply.unwrap_or_else(|e| {
            self.logger.error(qid, "search.failed", &[("reason", e.to_string())]);
            error_message(&e.to_string())
        })
    }

    fn register(&self, msg: &Message) -> Message {
        self.handle_register(msg, clock::now())
    }
}

struct Sweeper {
    stop: Arc<(Mutex<bool>, Condvar)>,
    thread: Option<JoinHandle<()>>,
}

impl Sweeper {
    fn start(giis: Arc<Giis>, every: Duration) -> Self {
        let stop = Arc::new((Mutex::new(false), Condvar::new()));
        let thread = {
            let stop = stop.clone();
            std::thread::spawn(move || {
                let (lock, cv) = &*stop;
                let mut stopped = lock.lock().unwrap();
                loop {
                    stopped = cv.wait_timeout(stopped, every).unwrap().0;
                    if *stopped {
                        return;
                    }
                    giis.sweep(clock::now());
                }
            })
        };
        Self { stop, thread: Some(thread) }
    }

    fn stop(&mut self) {
        *self.stop.0.lock().unwrap() = true;
        self.stop.1.notify_all();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub struct GiisHandle {
    pub giis: Arc<Giis>,
    server: ServerHandle,
    sweeper: Option<Sweeper>,
}

impl GiisHandle {
    pub fn endpoint(&self) -> String {
        self.server.endpoint()
    }

    pub fn shutdown(&mut self) {
        if let Some(mut s) = self.sweeper.take() {
            s.stop();
        }
        self.server.shutdown();
    }
}

impl Drop for GiisHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn start_giis(config: &GiisConfig, sink: Arc<EventSink>) -> Result<GiisHandle, GrisError> {
    let listener = TcpListener::bind(&config.listen)?;
    let endpoint = advertised(listener.local_addr()?);
    let host = config.host_label.clone().unwrap_or(endpoint);
    let giis = Arc::new(Giis::new(config, Logger::new(sink, &host, "giis")));
    let server = net::serve_listener(listener, Auth { secret: config.secret.clone() }, giis.clone())?;
    let sweeper = Sweeper::start(giis.clone(), config.sweep_interval);
    Ok(GiisHandle { giis, server, sweeper: Some(sweeper) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdslite_core::wire::{register_message, RegisterRequest};
    use mdslite_core::Micros;

    fn giis() -> Giis {
        let cfg = GiisConfig::new(EntryName::parse("mds-vo-name=local").unwrap(), Ttl::Infinite, Duration::from_secs(1));
        Giis::new(&cfg, Logger::new(EventSink::memory(), "g", "giis"))
    }

    fn register(g: &Giis, host: &str, ttl: f64, now: i64) -> Message {
        let req = RegisterRequest {
            endpoint: format!("{host}:1"),
            suffix: EntryName::parse(&format!("mds-host-name={host}, mds-vo-name=local")).unwrap(),
            ttl_secs: ttl,
        };
        g.handle_register(&register_message(&req), Timestamp(now))
    }

    #[test]
    fn soft_state_lifecycle() {
        let g = giis();
        assert_eq!(register(&g, "a", 10.0, 0).kind, MessageKind::RegisterOk);
        assert_eq!(register(&g, "b", 10.0, 0).kind, MessageKind::RegisterOk);
        // renewal of a at 8 s keeps it alive past b's expiry
        register(&g, "a", 10.0, 8_000_000);
        let removed = g.sweep(Timestamp(12_000_000));
        assert_eq!(removed.len(), 1);
        assert_eq!(removed[0].endpoint, "b:1");
        assert_eq!(g.live_registrations(Timestamp(12_000_000)).len(), 1);
        assert!(g.sweep(Timestamp(17_999_999)).is_empty());
        assert_eq!(g.sweep(Timestamp(18_000_000)).len(), 1);
    }

    #[test]
    fn bad_registrations_are_refused() {
        let g = giis();
        assert_eq!(register(&g, "a", 0.0, 0).kind, MessageKind::Error);
        let foreign = RegisterRequest {
            endpoint: "x:1".into(),
            suffix: EntryName::parse("mds-vo-name=other").unwrap(),
            ttl_secs: 5.0,
        };
        assert_eq!(g.handle_register(&register_message(&foreign), Timestamp(0)).kind, MessageKind::Error);
        assert!(g.registrations().is_empty());
    }

    #[test]
    fn unreachable_member_yields_nothing() {
        let g = giis();
        register(&g, "127.0.0.1", 30.0, clock::now().0);
        let regs = g.live_registrations(clock::now());
        assert!(g.aggregate_refresh(&regs, "q").is_empty());
        assert_eq!(g.outbound_queries(), 1);
    }

    #[test]
    fn merge_keeps_newest() {
        let n = EntryName::parse("a=1").unwrap();
        let old = Entry::builder(n.clone(), Timestamp(1)).attr("objectclass", "x").attr("v", "old").build().unwrap();
        let new = Entry::builder(n, Timestamp(2)).attr("objectclass", "x").attr("v", "new").build().unwrap();
        assert_eq!(merge([&new, &old]), vec![new.clone()]);
        assert_eq!(merge([&old, &new]), vec![new]);
        let _ = Micros(0);
    }
}
