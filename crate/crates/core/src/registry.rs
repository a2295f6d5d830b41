//! Soft-state registration table.
//!
//! A member stays registered while it keeps renewing: a registration is
//! live at `t` iff `t - last_renewal < ttl`. Sweeping removes the rest.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::RegistrationError;
use crate::name::{EntryName, Scope};
use crate::time::{Micros, Timestamp};
use crate::wire::RegisterRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub endpoint: String,
    pub suffix: EntryName,
    pub ttl: Micros,
    pub last_renewal: Timestamp,
}

impl Registration {
    pub fn is_live(&self, now: Timestamp) -> bool {
        now - self.last_renewal < self.ttl
    }

    pub fn expires_at(&self) -> Timestamp {
        self.last_renewal + self.ttl
    }

    /// Stable identifier for the (endpoint, suffix) pair.
    pub fn key(&self) -> String {
        registration_key(&self.endpoint, &self.suffix)
    }
}

pub fn registration_key(endpoint: &str, suffix: &EntryName) -> String {
    alloc::format!("{endpoint}|{suffix}")
}

#[derive(Debug, Clone)]
pub struct Registry {
    suffix: EntryName,
    members: BTreeMap<String, Registration>,
}

impl Registry {
    pub fn new(suffix: EntryName) -> Self {
        Self { suffix, members: BTreeMap::new() }
    }

    pub fn suffix(&self) -> &EntryName {
        &self.suffix
    }

    /// Creates or renews the registration for (endpoint, suffix).
    pub fn register(&mut self, req: &RegisterRequest, now: Timestamp) -> Result<&Registration, RegistrationError> {
        if req.ttl_secs.is_nan() || req.ttl_secs <= 0.0 || !req.ttl_secs.is_finite() {
            return Err(RegistrationError::NonPositiveTtl);
        }
        if !req.suffix.is_within(&self.suffix) {
            return Err(RegistrationError::ForeignSuffix(req.suffix.to_string()));
        }
        if req.endpoint.is_empty() {
            return Err(RegistrationError::BadField("endpoint"));
        }
        let reg = Registration {
            endpoint: req.endpoint.clone(),
            suffix: req.suffix.clone(),
            ttl: Micros::from_secs_f64(req.ttl_secs),
            last_renewal: now,
        };
        let key = reg.key();
        self.members.insert(key.clone(), reg);
        Ok(&self.members[&key])
    }

    /// Removes every registration with `now - last_renewal >= ttl`.
    pub fn sweep(&mut self, now: Timestamp) -> Vec<Registration> {
        let dead: Vec<String> = self
            .members
            .iter()
            .filter(|(_, r)| !r.is_live(now))
            .map(|(k, _)| k.clone())
            .collect();
        dead.into_iter().filter_map(|k| self.members.remove(&k)).collect()
    }

    pub fn live(&self, now: Timestamp) -> impl Iterator<Item = &Registration> {
        self.members.values().filter(move |r| r.is_live(now))
    }

    /// Live members whose subtree can contribute to the request scope.
    pub fn route(&self, base: &EntryName, scope: Scope, now: Timestamp) -> Vec<Registration> {
        self.live(now)
            .filter(|r| r.suffix.subtree_intersects(base, scope))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Registration> {
        self.members.values()
    }
}
