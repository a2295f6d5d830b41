use std::time::Instant;

use mdslite::sink::{EventSink, Logger};
use mdslite_core::{Edge, PhaseName, Timestamp};

#[test]
fn emit_is_cheap() {
    let dir = tempfile::tempdir().unwrap();
    let sink = EventSink::file(dir.path().join("events.log")).unwrap();
    let logger = Logger::new(sink.clone(), "127.0.0.1:2135", "gris");
    let mut samples = Vec::with_capacity(20_000);
    for i in 0..20_000 {
        let t = Instant::now();
        logger.phase("q-12-345", PhaseName::ALL[i % 7], Edge::Start, Timestamp(1_700_000_000_000_000 + i as i64));
        samples.push(t.elapsed().as_nanos());
    }
    samples.sort_unstable();
    let median = samples[samples.len() / 2];
    assert!(median < 10_000, "median emit {median} ns");
    sink.close().unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("events.log")).unwrap().lines().count(), 20_000);
}

#[test]
fn concurrent_emitters_never_interleave_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.log");
    let sink = EventSink::file(&path).unwrap();
    std::thread::scope(|s| {
        for w in 0..8 {
            let logger = Logger::new(sink.clone(), "h", "bench");
            s.spawn(move || {
                for i in 0..2_000 {
                    logger.marker(&format!("q-{w}-{i}"), "tick", &[("n", i.to_string())]);
                }
            });
        }
    });
    sink.close().unwrap();
    let parsed = mdslite_core::parse_log(&std::fs::read_to_string(&path).unwrap());
    assert!(parsed.diagnostics.is_empty());
    assert_eq!(parsed.events.len(), 16_000);
}
