//! Simulated information providers. Each provider runs one invocation at a
//! time in arrival order, takes `cost` of wall time, and produces a
//! deterministic set of entries from its seed.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use mdslite_core::{Entry, EntryName, Rdn, Timestamp};
use rand::distributions::Alphanumeric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clock;
use crate::sink::Logger;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSpec {
    pub name: String,
    pub suffix: EntryName,
    pub cost: Duration,
    pub entry_count: usize,
    pub entry_bytes: usize,
    pub seed: u64,
    /// Every invocation fails after its cost has elapsed.
    pub fail: bool,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider {0} failed")]
    ProviderFailed(String),
}

/// FIFO ticket gate.
#[derive(Default)]
struct Gate {
    state: Mutex<(u64, u64)>,
    turn: Condvar,
}

struct Pass<'a>(&'a Gate);

impl Gate {
    fn enter(&self) -> Pass<'_> {
        let mut g = self.state.lock().unwrap();
        let ticket = g.0;
        g.0 += 1;
        while g.1 != ticket {
            g = self.turn.wait(g).unwrap();
        }
        Pass(self)
    }
}

impl Drop for Pass<'_> {
    fn drop(&mut self) {
        self.0.state.lock().unwrap().1 += 1;
        self.0.turn.notify_all();
    }
}

pub struct Provider {
    spec: ProviderSpec,
    gate: Gate,
    invocations: AtomicU64,
}

impl Provider {
    pub fn new(spec: ProviderSpec) -> Self {
        Self { spec, gate: Gate::default(), invocations: AtomicU64::new(0) }
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }

    pub fn invoke(&self, qid: &str, logger: &Logger) -> Result<Vec<Entry>, ProviderError> {
        self.exclusive(|| self.invoke_held(qid, logger))
    }

    /// Runs `f` during this provider's turn in the FIFO queue.
    pub fn exclusive<T>(&self, f: impl FnOnce() -> T) -> T {
        let _pass = self.gate.enter();
        f()
    }

    /// One invocation. Callers must be inside [`Provider::exclusive`].
    pub(crate) fn invoke_held(&self, qid: &str, logger: &Logger) -> Result<Vec<Entry>, ProviderError> {
        let provider = [("provider", self.spec.name.clone())];
        logger.marker(qid, "provider.start", &provider);
        self.invocations.fetch_add(1, Ordering::Relaxed);
        std::thread::sleep(self.spec.cost);
        let out = if self.spec.fail {
            logger.error(qid, "provider.failed", &provider);
            Err(ProviderError::ProviderFailed(self.spec.name.clone()))
        } else {
            Ok(generate_entries(&self.spec, clock::now()))
        };
        logger.marker(qid, "provider.end", &provider);
        out
    }
}

const FILLER_ATTR: &str = "mds-provider-data";

/// The provider's entries: its own suffix entry followed by children. Each
/// entry is padded to about `entry_bytes` of LDIF; attribute values depend
/// only on the seed.
pub fn generate_entries(spec: &ProviderSpec, ts: Timestamp) -> Vec<Entry> {
    (0..spec.entry_count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (name, class) = if i == 0 {
                (spec.suffix.clone(), "MdsProvider")
            } else {
                let rdn = Rdn::new("mds-device-name", format!("{}-{i}", spec.name)).expect("valid rdn");
                (spec.suffix.child(rdn), "MdsDevice")
            };
            let base = Entry::builder(name, ts)
                .attr("objectclass", class)
                .attr("mds-provider-name", spec.name.clone())
                .attr("mds-cpu-speed", rng.gen_range(400..3000).to_string())
                .attr("mds-free-memory", rng.gen_range(16..4096).to_string());
            let size = base.clone().build().map(|e| e.serialized_size()).unwrap_or(0);
            let overhead = FILLER_ATTR.len() + 3;
            let pad = spec.entry_bytes.saturating_sub(size + overhead).max(1);
            let filler: String = (&mut rng).sample_iter(Alphanumeric).take(pad).map(char::from).collect();
            base.attr(FILLER_ATTR, filler).build().expect("objectclass present")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sink::EventSink;
    use std::sync::Arc;
    use std::time::Instant;

    fn spec(cost_ms: u64) -> ProviderSpec {
        ProviderSpec {
            name: "cpu".into(),
            suffix: EntryName::parse("mds-provider-name=cpu, mds-host-name=h, mds-vo-name=local").unwrap(),
            cost: Duration::from_millis(cost_ms),
            entry_count: 4,
            entry_bytes: 220,
            seed: 7,
            fail: false,
        }
    }

    #[test]
    fn entries_are_deterministic_and_sized() {
        let a = generate_entries(&spec(0), Timestamp(1));
        let b = generate_entries(&spec(0), Timestamp(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].name(), &spec(0).suffix);
        for e in &a {
            let n = e.serialized_size() as f64;
            assert!((n - 220.0).abs() <= 22.0, "{n}");
            assert!(e.name().is_within(&spec(0).suffix));
        }
    }

    #[test]
    fn concurrent_callers_are_serialized() {
        let p = Arc::new(Provider::new(spec(20)));
        let sink = EventSink::memory();
        let logger = Logger::new(sink.clone(), "h", "provider");
        let t0 = Instant::now();
        std::thread::scope(|s| {
            for i in 0..5 {
                let (p, logger) = (p.clone(), logger.clone());
                s.spawn(move || p.invoke(&format!("q{i}"), &logger).unwrap());
            }
        });
        assert!(t0.elapsed() >= Duration::from_millis(100));
        assert_eq!(p.invocations(), 5);
        // start/end markers strictly alternate
        let evs = sink.events().unwrap();
        let kinds: Vec<&str> = evs.iter().map(|e| e.evnt.as_str()).collect();
        for pair in kinds.chunks(2) {
            assert_eq!(pair, ["provider.start", "provider.end"]);
        }
    }

    #[test]
    fn failing_provider() {
        let p = Provider::new(ProviderSpec { fail: true, ..spec(0) });
        let logger = Logger::new(EventSink::memory(), "h", "provider");
        assert!(matches!(p.invoke("q", &logger), Err(ProviderError::ProviderFailed(_))));
    }
}
