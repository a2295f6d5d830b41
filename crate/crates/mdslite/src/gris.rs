//! Resource information server: answers searches over the entries of its
//! providers, caching each provider's output for the configured TTL.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use mdslite_core::index::finish_results;
use mdslite_core::wire::{error_message, parse_search, result_message, RegisterRequest};
use mdslite_core::{
    build_index, CacheRecord, Entry, EntryName, Message, PhaseName, Rdn, Scope, SearchError, SearchIndex, Timestamp,
    Ttl, WireError,
};
use thiserror::Error;

use crate::clock;
use crate::config::{self, ConfigError};
use crate::net::{self, advertised, Auth, Handler, ServerHandle};
use crate::provider::{Provider, ProviderError, ProviderSpec};
use crate::sink::{EventSink, Logger, PhaseTrack};

pub const DEFAULT_SECRET: &str = "mdslite";
pub const DEFAULT_REGISTER_TTL: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct GrisConfig {
    pub suffix: EntryName,
    pub cache_ttl: Ttl,
    pub providers: Vec<ProviderSpec>,
    pub listen: String,
    pub log: Option<PathBuf>,
    pub secret: String,
    /// Queued invocations reuse a result stored while they waited.
    pub coalesce: bool,
    pub register_to: Option<String>,
    pub register_ttl: f64,
    /// HOST token in the event log; defaults to the listen address.
    pub host_label: Option<String>,
}

impl GrisConfig {
    pub fn new(suffix: EntryName, cache_ttl: Ttl, providers: Vec<ProviderSpec>) -> Self {
        Self {
            suffix,
            cache_ttl,
            providers,
            listen: "127.0.0.1:0".into(),
            log: None,
            secret: DEFAULT_SECRET.into(),
            coalesce: false,
            register_to: None,
            register_ttl: DEFAULT_REGISTER_TTL,
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
        let mut cfg = Self::new(suffix, Ttl::Infinite, Vec::new());
        for l in &lines {
            match l.key {
                "suffix" => {}
                "cache-ttl" => cfg.cache_ttl = l.value.parse().map_err(|e: String| ConfigError::at(l.number, e))?,
                "listen" => cfg.listen = l.value.to_owned(),
                "log" => cfg.log = Some(PathBuf::from(l.value)),
                "secret" => cfg.secret = l.value.to_owned(),
                "coalesce" => cfg.coalesce = matches!(l.value, "true" | "yes" | "1"),
                "register-to" => cfg.register_to = Some(l.value.to_owned()),
                "register-ttl" => cfg.register_ttl = config::number(l)?,
                "host" => cfg.host_label = Some(l.value.to_owned()),
                "provider" => {
                    let spec = parse_provider(l.value, &cfg.suffix).map_err(|r| ConfigError::at(l.number, r))?;
                    cfg.providers.push(spec);
                }
                other => return Err(ConfigError::at(l.number, format!("unknown key {other}"))),
            }
        }
        cfg.validate().map_err(|r| ConfigError::at(suffix_line.number, r))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.register_ttl.is_nan() || self.register_ttl <= 0.0 {
            return Err("register-ttl must be positive".into());
        }
        for (i, p) in self.providers.iter().enumerate() {
            if !p.suffix.is_within(&self.suffix) || p.suffix == self.suffix {
                return Err(format!("provider {} must sit below the server suffix", p.name));
            }
            for q in &self.providers[..i] {
                if q.name == p.name {
                    return Err(format!("duplicate provider {}", p.name));
                }
                if p.suffix.is_within(&q.suffix) || q.suffix.is_within(&p.suffix) {
                    return Err(format!("providers {} and {} overlap", q.name, p.name));
                }
            }
        }
        Ok(())
    }
}

/// `name,suffix,cost-ms,entry-count,entry-bytes,seed[,fail]`. The suffix may
/// contain commas; a suffix outside the server suffix is taken as relative.
pub fn parse_provider(value: &str, server_suffix: &EntryName) -> Result<ProviderSpec, String> {
    let mut fields: Vec<&str> = value.split(',').map(str::trim).collect();
    let fail = fields.last() == Some(&"fail");
    if fail {
        fields.pop();
    }
    if fields.len() < 6 {
        return Err("provider needs name,suffix,cost-ms,entry-count,entry-bytes,seed".into());
    }
    let nums = fields.split_off(fields.len() - 4);
    let num = |i: usize, what: &str| -> Result<u64, String> {
        nums[i].parse().map_err(|_| format!("provider {what}: not a non-negative integer: {}", nums[i]))
    };
    let (cost, count, bytes, seed) = (num(0, "cost")?, num(1, "entry-count")?, num(2, "entry-bytes")?, num(3, "seed")?);
    if count == 0 {
        return Err("provider entry-count must be at least 1".into());
    }
    let name = fields[0].to_owned();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(format!("bad provider name {name:?}"));
    }
    let suffix = EntryName::parse(&fields[1..].join(",")).map_err(|e| format!("provider suffix: {e}"))?;
    let suffix = if suffix.is_within(server_suffix) {
        suffix
    } else {
        let mut c = suffix.components().to_vec();
        c.extend(server_suffix.components().iter().cloned());
        EntryName::from_components(c).map_err(|e| e.to_string())?
    };
    Ok(ProviderSpec {
        name,
        suffix,
        cost: Duration::from_millis(cost),
        entry_count: count as usize,
        entry_bytes: bytes as usize,
        seed,
        fail,
    })
}

/// Providers laid out as `mds-provider-name=<name>` children of `suffix`.
pub fn uniform_providers(
    suffix: &EntryName,
    count: usize,
    cost: Duration,
    entry_count: usize,
    entry_bytes: usize,
    seed: u64,
) -> Vec<ProviderSpec> {
    (0..count)
        .map(|i| {
            let name = format!("p{i}");
            ProviderSpec {
                suffix: suffix.child(Rdn::new("mds-provider-name", name.clone()).expect("valid rdn")),
                name,
                cost,
                entry_count,
                entry_bytes,
                seed: seed.wrapping_add(i as u64 * 1_000_003),
                fail: false,
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum GrisError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("provider output: {0}")]
    Index(#[from] mdslite_core::IndexError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Client(#[from] crate::net::ClientError),
}

impl GrisError {
    pub fn from_client(e: crate::net::ClientError) -> Self {
        GrisError::Client(e)
    }
}

type Record = Arc<CacheRecord<SearchIndex>>;

pub struct Gris {
    suffix: EntryName,
    ttl: Ttl,
    coalesce: bool,
    host_entry: Entry,
    providers: Vec<Provider>,
    cache: Vec<RwLock<Option<Record>>>,
    logger: Logger,
    provider_logger: Logger,
}

impl Gris {
    pub fn new(config: &GrisConfig, logger: Logger) -> Self {
        let host_entry = Entry::builder(config.suffix.clone(), clock::now())
            .attr("objectclass", "MdsHost")
            .attr("mds-host-name", config.suffix.rdn().value.clone())
            .attr("mds-provider-count", config.providers.len().to_string())
            .build()
            .expect("objectclass present");
        Self {
            suffix: config.suffix.clone(),
            ttl: config.cache_ttl,
            coalesce: config.coalesce,
            host_entry,
            providers: config.providers.iter().cloned().map(Provider::new).collect(),
            cache: config.providers.iter().map(|_| RwLock::new(None)).collect(),
            provider_logger: logger.with_prog("provider"),
            logger,
        }
    }

    pub fn suffix(&self) -> &EntryName {
        &self.suffix
    }

    pub fn providers(&self) -> &[Provider] {
        &self.providers
    }

    /// Total provider invocations so far.
    pub fn invocations(&self) -> u64 {
        self.providers.iter().map(Provider::invocations).sum()
    }

    /// Number of entries a full-tree search returns.
    pub fn entry_count(&self) -> usize {
        1 + self.providers.iter().map(|p| p.spec().entry_count).sum::<usize>()
    }

    fn lookup(&self, i: usize, now: Timestamp) -> Option<Record> {
        self.cache[i].read().unwrap().as_ref().filter(|r| r.is_fresh(now)).cloned()
    }

    /// Invokes provider `i` in its FIFO turn and replaces its cache record.
    fn refresh(&self, i: usize, qid: &str, request_start: Timestamp) -> Result<Record, GrisError> {
        let p = &self.providers[i];
        p.exclusive(|| {
            if self.coalesce {
                let current = self.cache[i].read().unwrap().clone();
                if let Some(r) = current.filter(|r| r.stored_at >= request_start) {
                    return Ok(r);
                }
            }
            let entries = p.invoke_held(qid, &self.provider_logger)?;
            let index = build_index(entries, p.spec().suffix.clone())?;
            let record =
                Arc::new(CacheRecord { key: p.spec().name.clone(), value: index, stored_at: clock::now(), ttl: self.ttl });
            *self.cache[i].write().unwrap() = Some(record.clone());
            Ok(record)
        })
    }

    /// Fills every provider's cache record.
    pub fn warm(&self) -> Result<(), GrisError> {
        let now = clock::now();
        for i in 0..self.providers.len() {
            self.refresh(i, "warmup", now)?;
        }
        Ok(())
    }

    fn run_search(&self, msg: &Message, qid: &str, track: &mut PhaseTrack<'_>, received: Timestamp) -> Result<Message, GrisError> {
        // Server-InitSearch
        let req = parse_search(msg)?;
        let (base, scope) = (&req.base, req.scope);
        if !base.is_within(&self.suffix) && !self.suffix.is_within(base) {
            return Err(SearchError::NoSuchBase(base.to_string()).into());
        }
        let now = clock::now();
        let mut records = Vec::new();
        let mut stale = Vec::new();
        for (i, p) in self.providers.iter().enumerate() {
            if p.spec().suffix.subtree_intersects(base, scope) {
                match self.lookup(i, now) {
                    Some(r) => records.push(r),
                    None => stale.push(i),
                }
            }
        }

        track.advance(PhaseName::ServerSearchIndex);
        let mut candidates: Vec<Entry> = Vec::new();
        if self.host_entry.name().in_scope(base, scope) {
            candidates.push(self.host_entry.clone());
        }
        for r in &records {
            candidates.extend(r.value.in_scope(base, scope).into_iter().cloned());
        }

        let invoking = track.advance(PhaseName::ServerInvoking);
        if stale.is_empty() {
            track.advance_at(PhaseName::ServerGenResult, invoking);
        } else {
            for i in stale {
                let r = self.refresh(i, qid, received)?;
                candidates.extend(r.value.in_scope(base, scope).into_iter().cloned());
                records.push(r);
            }
            track.advance(PhaseName::ServerGenResult);
        }
        if scope != Scope::Subtree && base != &self.suffix && !records.iter().any(|r| r.value.get(base).is_some()) {
            return Err(SearchError::NoSuchBase(base.to_string()).into());
        }
        let results = finish_results(candidates.iter(), &req.filter, &req.attrs);
        Ok(result_message(qid, &results))
    }
}

impl Handler for Gris {
    fn search(&self, msg: &Message, received: Timestamp) -> Message {
        let Some(qid) = msg.get("qid").filter(|q| !q.is_empty() && !q.contains(char::is_whitespace)) else {
            return error_message("missing qid");
        };
        let mut track = PhaseTrack::begin(&self.logger, qid, PhaseName::ServerInitSearch, received);
        let reply = self.run_search(msg, qid, &mut track, received);
        track.finish();
        reply.unwrap_or_else(|e| {
            self.logger.error(qid, "search.failed", &[("reason", e.to_string())]);
            error_message(&e.to_string())
        })
    }
}

/// Periodic soft-state renewal toward an aggregate directory.
pub struct Registrar {
    stop: Arc<(Mutex<bool>, Condvar)>,
    thread: Option<JoinHandle<()>>,
}

impl Registrar {
    /// Registers once immediately, then renews every `ttl / 3`.
    pub fn start(target: String, request: RegisterRequest, logger: Logger) -> Self {
        let stop = Arc::new((Mutex::new(false), Condvar::new()));
        let period = Duration::from_secs_f64(request.ttl_secs / 3.0);
        let register = move |logger: &Logger| {
            if let Err(e) = net::send_register(&target, &request, Duration::from_secs(10)) {
                logger.error("-", "register.failed", &[("target", target.clone()), ("reason", e.to_string())]);
            }
        };
        register(&logger);
        let thread = {
            let stop = stop.clone();
            std::thread::spawn(move || {
                let (lock, cv) = &*stop;
                let mut stopped = lock.lock().unwrap();
                loop {
                    stopped = cv.wait_timeout(stopped, period).unwrap().0;
                    if *stopped {
                        return;
                    }
                    register(&logger);
                }
            })
        };
        Self { stop, thread: Some(thread) }
    }

    pub fn stop(&mut self) {
        *self.stop.0.lock().unwrap() = true;
        self.stop.1.notify_all();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Registrar {
    fn drop(&mut self) {
        self.stop();
    }
}

pub struct GrisHandle {
    pub gris: Arc<Gris>,
    server: ServerHandle,
    registrar: Option<Registrar>,
}

impl GrisHandle {
    pub fn endpoint(&self) -> String {
        self.server.endpoint()
    }

    /// Stops renewing first, then drains the server.
    pub fn shutdown(&mut self) {
        if let Some(mut r) = self.registrar.take() {
            r.stop();
        }
        self.server.shutdown();
    }
}

impl Drop for GrisHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds, starts serving, and begins registering if configured.
pub fn start_gris(config: &GrisConfig, sink: Arc<EventSink>) -> Result<GrisHandle, GrisError> {
    config.validate().map_err(|r| ConfigError::at(0, r))?;
    let listener = TcpListener::bind(&config.listen)?;
    let endpoint = advertised(listener.local_addr()?);
    let host = config.host_label.clone().unwrap_or_else(|| endpoint.clone());
    let logger = Logger::new(sink, &host, "gris");
    let gris = Arc::new(Gris::new(config, logger.clone()));
    let server = net::serve_listener(listener, Auth { secret: config.secret.clone() }, gris.clone())?;
    let registrar = config.register_to.clone().map(|target| {
        let req = RegisterRequest { endpoint: endpoint.clone(), suffix: config.suffix.clone(), ttl_secs: config.register_ttl };
        Registrar::start(target, req, logger.with_prog("registrar"))
    });
    Ok(GrisHandle { gris, server, registrar })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = "
# test server
suffix=mds-host-name=h1, mds-vo-name=local
cache-ttl=30
provider=cpu,mds-provider-name=cpu,50,4,220,1
provider=mem,mds-provider-name=mem, mds-host-name=h1, mds-vo-name=local,10,2,100,2,fail
";

    #[test]
    fn parses_config() {
        let c = GrisConfig::parse(CONFIG).unwrap();
        assert_eq!(c.cache_ttl, Ttl::Finite(mdslite_core::Micros(30_000_000)));
        assert_eq!(c.providers.len(), 2);
        assert_eq!(c.providers[0].suffix.to_string(), "mds-provider-name=cpu, mds-host-name=h1, mds-vo-name=local");
        assert_eq!(c.providers[0].cost, Duration::from_millis(50));
        assert!(c.providers[1].fail);
        assert_eq!(c.providers[1].suffix, EntryName::parse("mds-provider-name=mem, mds-host-name=h1, mds-vo-name=local").unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(GrisConfig::parse("cache-ttl=1"), Err(ConfigError::Missing("suffix"))));
        let dup = "suffix=h=1\nprovider=a,p=a,1,1,1,1\nprovider=a,p=b,1,1,1,1";
        assert!(GrisConfig::parse(dup).is_err());
        let bad = "suffix=h=1\nprovider=a,p=a,x,1,1,1";
        assert!(matches!(GrisConfig::parse(bad), Err(ConfigError::Invalid { line: 2, .. })));
        assert!(GrisConfig::parse("suffix=h=1\nwhat=1").is_err());
        assert!(GrisConfig::parse("suffix=h=1\ncache-ttl=-3").is_err());
    }
}
