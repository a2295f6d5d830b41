use alloc::string::String;
use core::fmt;
use core::ops::{Add, Sub};

use chrono::{DateTime, SecondsFormat};

/// Wall-clock instant in microseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

/// A signed span in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Micros(pub i64);

impl Micros {
    pub const ZERO: Micros = Micros(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        Micros(libm::round(secs * 1e6) as i64)
    }

    pub fn from_millis(ms: i64) -> Self {
        Micros(ms * 1000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl core::iter::Sum for Micros {
    fn sum<I: Iterator<Item = Micros>>(iter: I) -> Micros {
        Micros(iter.map(|m| m.0).sum())
    }
}

impl Sub for Timestamp {
    type Output = Micros;
    fn sub(self, rhs: Timestamp) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl Add<Micros> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Micros) -> Timestamp {
        Timestamp(self.0.saturating_add(rhs.0))
    }
}

impl Timestamp {
    /// RFC 3339 with six fractional digits and a `Z` suffix.
    pub fn to_rfc3339(self) -> String {
        let dt = DateTime::from_timestamp_micros(self.0).unwrap_or_default();
        dt.to_rfc3339_opts(SecondsFormat::Micros, true)
    }

    /// Strict inverse of [`Timestamp::to_rfc3339`].
    pub fn parse_rfc3339(text: &str) -> Option<Timestamp> {
        // Fixed shape: YYYY-MM-DDTHH:MM:SS.ffffffZ
        let b = text.as_bytes();
        if b.len() != 27 || b[26] != b'Z' || b[19] != b'.' {
            return None;
        }
        let dt = DateTime::parse_from_rfc3339(text).ok()?;
        let ts = Timestamp(dt.timestamp_micros());
        (ts.to_rfc3339() == text).then_some(ts)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_round_trip() {
        let ts = Timestamp(1_760_623_080_123_456);
        let s = ts.to_rfc3339();
        assert_eq!(s, "2025-10-16T13:58:00.123456Z");
        assert_eq!(Timestamp::parse_rfc3339(&s), Some(ts));
    }

    #[test]
    fn rejects_non_canonical() {
        assert_eq!(Timestamp::parse_rfc3339("2025-10-16T13:58:00.123Z"), None);
        assert_eq!(Timestamp::parse_rfc3339("2025-10-16T13:58:00.123456+00:00"), None);
    }
}
