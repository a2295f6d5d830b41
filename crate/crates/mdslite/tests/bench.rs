use std::time::Duration;

use mdslite::bench::{run_benchmark, BenchConfig, BenchError, LogSource, QueryTemplate};
use mdslite::gris::{start_gris, uniform_providers, GrisConfig};
use mdslite::replicate::{run_point, ExperimentMatrix, Scale, Scenario};
use mdslite::sink::EventSink;
use mdslite_core::{EntryName, PhaseName, Ttl};

fn suffix() -> EntryName {
    EntryName::parse("mds-host-name=b1, mds-vo-name=local").unwrap()
}

fn server(ttl: Ttl, fail: bool) -> (mdslite::gris::GrisHandle, std::sync::Arc<EventSink>) {
    let sink = EventSink::memory();
    let mut ps = uniform_providers(&suffix(), 2, Duration::from_millis(2), 3, 200, 5);
    ps[1].fail = fail;
    let g = start_gris(&GrisConfig::new(suffix(), ttl, ps), sink.clone()).unwrap();
    g.gris.warm().ok();
    (g, sink)
}

#[test]
fn closed_loop_run_is_fully_accounted() {
    let (g, server_sink) = server(Ttl::Infinite, false);
    let mut cfg = BenchConfig::new(g.endpoint(), QueryTemplate::full_tree(suffix()), 3, Duration::from_secs(2), Duration::from_millis(100));
    cfg.server_logs = vec![LogSource::Sink(server_sink)];
    cfg.sample_interval = Duration::from_millis(250);
    let r = run_benchmark(&cfg, EventSink::memory()).unwrap();
    assert!(r.succeeded > 20);
    assert_eq!(r.issued, r.succeeded);
    assert_eq!(r.incomplete, 0);
    assert_eq!(r.summary.lifelines.len() as u64, r.succeeded);
    assert!(r.summary.completed <= r.succeeded);
    assert!(r.throughput() <= r.closed_loop_bound().unwrap());
    assert!(r.samples.len() >= 6);
    assert_eq!(r.summary.decomposition.rpt_exact, r.summary.lifelines.len());
    assert_eq!(r.summary.row.phase(PhaseName::ServerInvoking), 0.0);
}

#[test]
fn failures_are_counted_by_class() {
    let (g, server_sink) = server(Ttl::Zero, true);
    let mut cfg = BenchConfig::new(g.endpoint(), QueryTemplate::full_tree(suffix()), 2, Duration::from_secs(1), Duration::from_millis(100));
    cfg.server_logs = vec![LogSource::Sink(server_sink)];
    let r = run_benchmark(&cfg, EventSink::memory()).unwrap();
    assert_eq!(r.succeeded, 0);
    assert_eq!(r.errors.get("server").copied(), Some(r.issued));
    assert_eq!(r.summary.row.errors, r.issued);
    assert_eq!(r.throughput(), 0.0);
}

#[test]
fn persistent_sessions_produce_complete_lifelines() {
    let (g, server_sink) = server(Ttl::Infinite, false);
    let mut cfg = BenchConfig::new(g.endpoint(), QueryTemplate::full_tree(suffix()), 2, Duration::from_secs(1), Duration::from_millis(50));
    cfg.server_logs = vec![LogSource::Sink(server_sink)];
    cfg.persistent = true;
    let r = run_benchmark(&cfg, EventSink::memory()).unwrap();
    assert!(r.succeeded > 5);
    assert_eq!(r.incomplete, 0);
    assert_eq!(r.summary.row.phase(PhaseName::ClientConnect), 0.0);
}

#[test]
fn unreachable_target_fails_fast() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let cfg = BenchConfig::new(addr.to_string(), QueryTemplate::full_tree(suffix()), 1, Duration::from_secs(1), Duration::ZERO);
    assert!(matches!(run_benchmark(&cfg, EventSink::memory()), Err(BenchError::TargetUnreachableAtStart(..))));
}

#[test]
fn rows_rebuilt_from_disk_match_the_live_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ExperimentMatrix::standard(Scenario::GrisCached, Scale::Desk);
    m.duration = Duration::from_secs(2);
    m.think = Duration::from_millis(100);
    m.provider_cost = Duration::from_millis(1);
    let point = run_point(&m, 2, dir.path()).unwrap();
    assert_eq!(format!("{:?}", point.report.summary.row), format!("{:?}", point.row));
    assert_eq!(point.invocations, 10);
    assert_eq!(point.outbound, None);
    assert!(dir.path().join("servers.log").exists());
    assert!(dir.path().join("samples.csv").exists());
}
