//! Allocation-only core of the mdslite hierarchical information service.
//!
//! Everything here is pure: the directory model (names, entries, filters,
//! the search index), the framed wire codec, the event-log line format,
//! lifeline correlation and its phase statistics, TTL freshness, the
//! soft-state registration table, and the load-average proxy. Sockets,
//! threads, clocks and files live in the `mdslite` crate.

#![no_std]
extern crate alloc;

pub mod cache;
pub mod entry;
pub mod error;
pub mod filter;
pub mod index;
pub mod lifeline;
pub mod load;
pub mod logfmt;
pub mod name;
pub mod phase;
pub mod registry;
pub mod stats;
pub mod time;
pub mod wire;

pub use cache::{CacheRecord, Ttl};
pub use entry::{parse_ldif, write_ldif_all, AttrSelection, Entry};
pub use error::*;
pub use filter::{eval_filter, Filter};
pub use index::{build_index, search, SearchIndex, SearchRequest};
pub use lifeline::{check_decomposition, correlate, phase_stats, Correlation, PhaseLifeline, PhaseStats};
pub use logfmt::{parse_log, serialize_log, Level, LogEvent};
pub use name::{parse_name, EntryName, Rdn, Scope};
pub use phase::{Edge, PhaseName};
pub use registry::{Registration, Registry};
pub use time::{Micros, Timestamp};
pub use wire::{decode, encode, Credential, Frame, Message, MessageKind};
