//! Wall clock in microseconds.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use mdslite_core::{Micros, Timestamp};

pub fn now() -> Timestamp {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    Timestamp(d.as_micros() as i64)
}

pub fn to_duration(m: Micros) -> Duration {
    Duration::from_micros(m.0.max(0) as u64)
}

pub fn from_duration(d: Duration) -> Micros {
    Micros(d.as_micros() as i64)
}
