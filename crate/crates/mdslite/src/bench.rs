//! Closed-loop load generator. Each simulated user thinks, issues one
//! query, waits for the complete response, and repeats.

use std::collections::{BTreeMap, HashSet};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use mdslite_core::load::LoadProxy;
use mdslite_core::{AttrSelection, Credential, EntryName, Filter, LogEvent, Scope, SearchRequest, Timestamp};
use thiserror::Error;

use crate::analysis::{self, RunMeta, RunSummary, QUERY_ERROR, RUN_END, RUN_START};
use crate::clock;
use crate::net::{client_query, ClientError, ClientOptions, QueryOutcome, Session, DEFAULT_TIMEOUT};
use crate::sink::{EventSink, Logger};

/// Load-proxy level per core above which a run is flagged as overloaded.
pub const OVERLOAD_PER_CORE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    pub base: EntryName,
    pub scope: Scope,
    pub filter: Filter,
    pub attrs: AttrSelection,
}

impl QueryTemplate {
    pub fn full_tree(base: EntryName) -> Self {
        Self { base, scope: Scope::Subtree, filter: Filter::everything(), attrs: AttrSelection::All }
    }

    pub fn request(&self, qid: String) -> SearchRequest {
        SearchRequest { base: self.base.clone(), scope: self.scope, filter: self.filter.clone(), attrs: self.attrs.clone(), qid }
    }
}

/// Where server-side events for the run can be read from.
#[derive(Clone)]
pub enum LogSource {
    Sink(Arc<EventSink>),
    File(PathBuf),
}

impl LogSource {
    fn events(&self) -> std::io::Result<Vec<LogEvent>> {
        match self {
            LogSource::Sink(s) => s.events(),
            LogSource::File(p) => Ok(mdslite_core::parse_log(&std::fs::read_to_string(p)?).events),
        }
    }
}

#[derive(Clone)]
pub struct BenchConfig {
    pub target: String,
    pub credential: Credential,
    pub users: usize,
    pub duration: Duration,
    pub think: Duration,
    pub template: QueryTemplate,
    pub sample_interval: Duration,
    pub warmup: Duration,
    pub timeout: Duration,
    /// Reuse one bound connection per user.
    pub persistent: bool,
    pub scenario: String,
    pub server_logs: Vec<LogSource>,
    pub host_label: String,
}

impl BenchConfig {
    pub fn new(target: impl Into<String>, template: QueryTemplate, users: usize, duration: Duration, think: Duration) -> Self {
        Self {
            target: target.into(),
            credential: Credential::new("mdsuser", crate::gris::DEFAULT_SECRET).expect("non-empty identity"),
            users,
            duration,
            think,
            template,
            sample_interval: Duration::from_secs(1),
            warmup: Duration::ZERO,
            timeout: DEFAULT_TIMEOUT,
            persistent: false,
            scenario: "adhoc".into(),
            server_logs: Vec::new(),
            host_label: "bench".into(),
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.users == 0 {
            return Err(BenchError::InvalidConfig("users must be at least 1".into()));
        }
        if self.duration.is_zero() || self.warmup >= self.duration {
            return Err(BenchError::InvalidConfig("duration must exceed warmup".into()));
        }
        if self.sample_interval.is_zero() {
            return Err(BenchError::InvalidConfig("sample interval must be positive".into()));
        }
        if self.scenario.is_empty() || self.scenario.contains([',', ' ', '\n']) {
            return Err(BenchError::InvalidConfig(format!("bad scenario label {:?}", self.scenario)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("target {0} unreachable at start: {1}")]
    TargetUnreachableAtStart(String, String),
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("reading server log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Seconds since the run started.
    pub at: f64,
    /// Successful queries finished during this interval.
    pub completed: u64,
    pub in_flight: usize,
    pub busy_workers: usize,
    pub load_proxy: f64,
    /// Fraction of one core used by this process, when available.
    pub cpu: Option<f64>,
}

#[derive(Debug, Default)]
struct WorkerTally {
    issued: u64,
    ok: Vec<QueryOutcome>,
    errors: BTreeMap<&'static str, u64>,
    ok_qids: Vec<String>,
}

#[derive(Default)]
struct Shared {
    in_flight: AtomicUsize,
    busy: AtomicUsize,
    completed: AtomicU64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub issued: u64,
    pub succeeded: u64,
    pub errors: BTreeMap<String, u64>,
    /// Smallest client-observed ORT over successful queries, seconds.
    pub min_ort: Option<f64>,
    /// Successful queries whose lifeline could not be assembled.
    pub incomplete: usize,
    pub samples: Vec<Sample>,
    pub overloaded: bool,
    pub mean_response_bytes: f64,
}

impl RunReport {
    pub fn throughput(&self) -> f64 {
        self.summary.row.throughput
    }

    /// `U / (think + min ORT)`: no closed-loop run can exceed it.
    pub fn closed_loop_bound(&self) -> Option<f64> {
        self.min_ort.map(|m| self.summary.meta.users as f64 / (self.summary.meta.think_secs + m))
    }

    pub fn samples_csv(&self) -> String {
        let mut s = String::from("at,completed,in_flight,busy_workers,load_proxy,cpu\n");
        for x in &self.samples {
            let cpu = x.cpu.map(|c| format!("{c:.4}")).unwrap_or_default();
            s.push_str(&format!("{:.3},{},{},{},{:.4},{}\n", x.at, x.completed, x.in_flight, x.busy_workers, x.load_proxy, cpu));
        }
        s
    }
}

fn probe(target: &str) -> Result<(), BenchError> {
    let fail = |e: String| BenchError::TargetUnreachableAtStart(target.to_owned(), e);
    let addr = target.to_socket_addrs().map_err(|e| fail(e.to_string()))?.next().ok_or_else(|| fail("no address".into()))?;
    TcpStream::connect_timeout(&addr, Duration::from_secs(5)).map_err(|e| fail(e.to_string()))?;
    Ok(())
}

fn sleep_until(t: Instant) {
    let now = Instant::now();
    if t > now {
        std::thread::sleep(t - now);
    }
}

fn worker_loop(id: usize, cfg: &BenchConfig, logger: &Logger, shared: &Shared, start: Instant, deadline: Timestamp) -> WorkerTally {
    let opts = ClientOptions { timeout: cfg.timeout };
    let mut tally = WorkerTally::default();
    let mut session: Option<Session> = None;
    // Users start staggered across one think period so arrivals spread out.
    let mut next = start + cfg.think.mul_f64(1.0 + id as f64 / cfg.users as f64);
    for seq in 0u64.. {
        sleep_until(next);
        if clock::now() >= deadline {
            break;
        }
        let qid = format!("q-{id}-{seq}");
        let req = cfg.template.request(qid.clone());
        shared.busy.fetch_add(1, Ordering::Relaxed);
        shared.in_flight.fetch_add(1, Ordering::Relaxed);
        tally.issued += 1;
        let result = if cfg.persistent {
            let s = match session.take() {
                Some(s) => Ok(s),
                None => Session::open(&cfg.target, &cfg.credential, &opts),
            };
            s.and_then(|mut s| {
                let r = s.query(&req, Some(logger));
                if r.is_ok() {
                    session = Some(s);
                }
                r
            })
        } else {
            client_query(&cfg.target, &cfg.credential, &req, Some(logger), &opts)
        };
        shared.in_flight.fetch_sub(1, Ordering::Relaxed);
        match result {
            Ok(out) => {
                shared.completed.fetch_add(1, Ordering::Relaxed);
                tally.ok_qids.push(qid);
                tally.ok.push(out);
            }
            Err(e) => record_error(&mut tally, logger, &qid, &e),
        }
        shared.busy.fetch_sub(1, Ordering::Relaxed);
        next = Instant::now() + cfg.think;
    }
    if let Some(s) = session {
        s.close();
    }
    tally
}

fn record_error(tally: &mut WorkerTally, logger: &Logger, qid: &str, e: &ClientError) {
    *tally.errors.entry(e.class()).or_default() += 1;
    logger.error(qid, QUERY_ERROR, &[("class", e.class().to_owned()), ("reason", e.to_string())]);
}

/// Process CPU time in seconds from /proc, if available.
fn process_cpu_secs() -> Option<f64> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // utime and stime are fields 14 and 15 overall, 12 and 13 after the name
    let ticks: f64 = fields.get(11)?.parse::<f64>().ok()? + fields.get(12)?.parse::<f64>().ok()?;
    // SAFETY: sysconf only reads a configuration value.
    let hz = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    (hz > 0).then(|| ticks / hz as f64)
}

fn sampler(cfg: &BenchConfig, shared: &Shared, stop: &(Mutex<bool>, Condvar), start: Instant) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut load = LoadProxy::new(LoadProxy::ONE_MINUTE);
    let (mut last_at, mut last_done, mut last_cpu) = (start, 0u64, process_cpu_secs());
    let mut stopped = stop.0.lock().unwrap();
    loop {
        stopped = stop.1.wait_timeout(stopped, cfg.sample_interval).unwrap().0;
        if *stopped {
            return out;
        }
        let now = Instant::now();
        let dt = now - last_at;
        let done = shared.completed.load(Ordering::Relaxed);
        let in_flight = shared.in_flight.load(Ordering::Relaxed);
        let cpu_now = process_cpu_secs();
        let cpu = match (last_cpu, cpu_now) {
            (Some(a), Some(b)) if !dt.is_zero() => Some((b - a) / dt.as_secs_f64()),
            _ => None,
        };
        out.push(Sample {
            at: (now - start).as_secs_f64(),
            completed: done - last_done,
            in_flight,
            busy_workers: shared.busy.load(Ordering::Relaxed),
            load_proxy: load.update(in_flight as f64, clock::from_duration(dt)),
            cpu,
        });
        (last_at, last_done, last_cpu) = (now, done, cpu_now);
    }
}

/// Runs one benchmark and summarizes it from the merged client and server
/// events. Client events go to `sink`.
pub fn run_benchmark(cfg: &BenchConfig, sink: Arc<EventSink>) -> Result<RunReport, BenchError> {
    cfg.validate()?;
    probe(&cfg.target)?;
    let logger = Logger::new(sink.clone(), &cfg.host_label, analysis::CLIENT_PROG);
    let shared = Shared::default();
    let stop = (Mutex::new(false), Condvar::new());

    let start_ts = clock::now();
    let run_id = format!("run-{}-u{}-{}", cfg.scenario, cfg.users, start_ts.0);
    let mut meta = RunMeta {
        run_id: run_id.clone(),
        scenario: cfg.scenario.clone(),
        users: cfg.users,
        duration_secs: cfg.duration.as_secs_f64(),
        think_secs: cfg.think.as_secs_f64(),
        warmup_secs: cfg.warmup.as_secs_f64(),
        start: start_ts,
        end: None,
    };
    logger.event(start_ts, mdslite_core::Level::Info, RUN_START, &run_id, &meta.start_extras());
    let start = Instant::now();
    let deadline = start_ts + clock::from_duration(cfg.duration);

    let (tallies, samples) = std::thread::scope(|s| {
        let sampler = s.spawn(|| sampler(cfg, &shared, &stop, start));
        let workers: Vec<_> = (0..cfg.users)
            .map(|id| {
                let (logger, shared) = (&logger, &shared);
                std::thread::Builder::new()
                    .name(format!("user-{id}"))
                    .spawn_scoped(s, move || worker_loop(id, cfg, logger, shared, start, deadline))
                    .expect("spawn worker")
            })
            .collect();
        let tallies: Vec<WorkerTally> = workers.into_iter().map(|h| h.join().expect("worker panicked")).collect();
        *stop.0.lock().unwrap() = true;
        stop.1.notify_all();
        (tallies, sampler.join().expect("sampler panicked"))
    });

    let end_ts = logger.marker(&run_id, RUN_END, &[]);
    meta.end = Some(end_ts);

    let mut events = sink.events()?;
    for src in &cfg.server_logs {
        events.extend(src.events()?);
    }
    events.retain(|e| e.ts >= start_ts && e.ts <= end_ts);
    let summary = analysis::summarize_run(&meta, &events);

    let mut errors = BTreeMap::new();
    let (mut issued, mut ok, mut bytes, mut min_ort) = (0, Vec::new(), 0usize, None::<f64>);
    for t in tallies {
        issued += t.issued;
        for (k, v) in t.errors {
            *errors.entry(k.to_owned()).or_default() += v;
        }
        for o in &t.ok {
            let ort = o.ort().as_secs_f64();
            min_ort = Some(min_ort.map_or(ort, |m| m.min(ort)));
            bytes += o.response_bytes;
        }
        ok.extend(t.ok_qids);
    }
    let quarantined: HashSet<&str> = summary.quarantined.iter().map(|q| q.qid.as_str()).collect();
    let incomplete = ok.iter().filter(|q| quarantined.contains(q.as_str())).count();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
    let overloaded = samples.iter().any(|s| s.load_proxy / cores > OVERLOAD_PER_CORE);
    let succeeded = ok.len() as u64;
    Ok(RunReport {
        summary,
        issued,
        succeeded,
        errors,
        min_ort,
        incomplete,
        samples,
        overloaded,
        mean_response_bytes: if succeeded > 0 { bytes as f64 / succeeded as f64 } else { 0.0 },
    })
}
