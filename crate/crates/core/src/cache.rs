//! TTL freshness rules shared by the provider cache and the aggregate cache.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::time::{Micros, Timestamp};

/// Cache element time to live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ttl {
    /// Never fresh: every lookup misses.
    Zero,
    Finite(Micros),
    /// Always fresh once filled.
    Infinite,
}

impl Ttl {
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_infinite() && secs > 0.0 {
            Ttl::Infinite
        } else if secs <= 0.0 || secs.is_nan() {
            Ttl::Zero
        } else {
            Ttl::Finite(Micros::from_secs_f64(secs))
        }
    }

    /// Whether something stored at `stored_at` is still fresh at `now`:
    /// `now - stored_at < ttl`.
    pub fn is_fresh(self, stored_at: Timestamp, now: Timestamp) -> bool {
        match self {
            Ttl::Zero => false,
            Ttl::Infinite => true,
            Ttl::Finite(ttl) => (now - stored_at) < ttl,
        }
    }

    pub fn as_secs_f64(self) -> f64 {
        match self {
            Ttl::Zero => 0.0,
            Ttl::Finite(m) => m.as_secs_f64(),
            Ttl::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Ttl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ttl::Zero => f.write_str("0"),
            Ttl::Infinite => f.write_str("inf"),
            Ttl::Finite(m) => write!(f, "{}", m.as_secs_f64()),
        }
    }
}

impl FromStr for Ttl {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inf" | "infinite" | "∞" => Ok(Ttl::Infinite),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0)
                .map(Ttl::from_secs_f64)
                .ok_or_else(|| alloc::format!("invalid ttl {other:?}")),
        }
    }
}

/// One cached result set.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord<T> {
    pub key: String,
    pub value: T,
    pub stored_at: Timestamp,
    pub ttl: Ttl,
}

impl<T> CacheRecord<T> {
    pub fn is_fresh(&self, now: Timestamp) -> bool {
        self.ttl.is_fresh(self.stored_at, now)
    }
}
