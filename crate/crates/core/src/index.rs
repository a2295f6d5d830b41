//! Immutable in-memory search index over a set of entries under one suffix.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Bound;

use crate::entry::{AttrSelection, Entry};
use crate::error::{IndexError, SearchError};
use crate::filter::Filter;
use crate::name::{EntryName, Scope};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchRequest {
    pub base: EntryName,
    pub scope: Scope,
    pub filter: Filter,
    pub attrs: AttrSelection,
    pub qid: String,
}

impl SearchRequest {
    /// Subtree search for everything under `base`.
    pub fn full_tree(base: EntryName, qid: impl Into<String>) -> Self {
        Self {
            base,
            scope: Scope::Subtree,
            filter: Filter::everything(),
            attrs: AttrSelection::All,
            qid: qid.into(),
        }
    }
}

/// Entries keyed by a root-first name key so that every subtree occupies one
/// contiguous key range; plus explicit parent → children adjacency.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    suffix: EntryName,
    entries: BTreeMap<String, Entry>,
    children: BTreeMap<String, BTreeSet<String>>,
}

pub fn build_index(entries: Vec<Entry>, suffix: EntryName) -> Result<SearchIndex, IndexError> {
    let mut map = BTreeMap::new();
    let mut children: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for entry in entries {
        if !entry.name().is_within(&suffix) {
            return Err(IndexError::ForeignEntry(entry.name().to_string()));
        }
        let key = entry.name().index_key();
        if let Some(parent) = entry.name().parent().filter(|p| p.is_within(&suffix)) {
            children.entry(parent.index_key()).or_default().insert(key.clone());
        }
        if let Some(dup) = map.insert(key, entry) {
            return Err(IndexError::DuplicateName(dup.name().to_string()));
        }
    }
    Ok(SearchIndex { suffix, entries: map, children })
}

impl SearchIndex {
    pub fn empty(suffix: EntryName) -> Self {
        Self { suffix, entries: BTreeMap::new(), children: BTreeMap::new() }
    }

    pub fn suffix(&self) -> &EntryName {
        &self.suffix
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &EntryName) -> Option<&Entry> {
        self.entries.get(&name.index_key())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entry> {
        self.entries.values()
    }

    /// Entries whose names fall in the scope of `base`, unfiltered and in
    /// index order. Never fails; `base` need not exist or be under the suffix.
    pub fn in_scope<'a>(&'a self, base: &EntryName, scope: Scope) -> Vec<&'a Entry> {
        let key = if base.is_within(&self.suffix) {
            base.index_key()
        } else if self.suffix.is_within(base) {
            match scope {
                Scope::Subtree => return self.entries.values().collect(),
                Scope::OneLevel if self.suffix.depth_below(base) == Some(1) => {
                    return self.get(&self.suffix).into_iter().collect();
                }
                _ => return Vec::new(),
            }
        } else {
            return Vec::new();
        };
        match scope {
            Scope::Base => self.entries.get(&key).into_iter().collect(),
            Scope::OneLevel => self
                .children
                .get(&key)
                .into_iter()
                .flatten()
                .filter_map(|k| self.entries.get(k))
                .collect(),
            Scope::Subtree => self
                .entries
                .range::<str, _>((Bound::Included(key.as_str()), Bound::Unbounded))
                .take_while(|(k, _)| k.starts_with(key.as_str()))
                .map(|(_, e)| e)
                .collect(),
        }
    }

    /// Like [`SearchIndex::in_scope`] but enforces that the base exists for
    /// base and one-level searches and lies within the served namespace.
    pub fn scope_candidates<'a>(
        &'a self,
        base: &EntryName,
        scope: Scope,
    ) -> Result<Vec<&'a Entry>, SearchError> {
        if !base.is_within(&self.suffix) && !self.suffix.is_within(base) {
            return Err(SearchError::OutsideSuffix(base.to_string()));
        }
        if scope != Scope::Subtree && self.get(base).is_none() {
            return Err(SearchError::NoSuchBase(base.to_string()));
        }
        Ok(self.in_scope(base, scope))
    }

    /// Full search: scope, filter, projection, then deterministic ordering.
    pub fn search(&self, request: &SearchRequest) -> Result<Vec<Entry>, SearchError> {
        let candidates = self.scope_candidates(&request.base, request.scope)?;
        Ok(finish_results(candidates, &request.filter, &request.attrs))
    }
}

pub fn search(index: &SearchIndex, request: &SearchRequest) -> Result<Vec<Entry>, SearchError> {
    index.search(request)
}

/// Applies filter and projection and sorts by formatted name.
pub fn finish_results<'a>(
    candidates: impl IntoIterator<Item = &'a Entry>,
    filter: &Filter,
    attrs: &AttrSelection,
) -> Vec<Entry> {
    let mut keyed: Vec<(String, Entry)> = candidates
        .into_iter()
        .filter(|e| filter.matches(e))
        .map(|e| (e.name().to_string(), e.project(attrs)))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, e)| e).collect()
}
