//! Services, load generator and analysis tooling for mdslite.

pub mod analysis;
pub mod bench;
pub mod clock;
pub mod config;
pub mod giis;
pub mod gris;
pub mod net;
pub mod provider;
pub mod replicate;
pub mod sink;

pub use mdslite_core as core;
