//! Directory entries and their LDIF-like text form.
//!
//! ```text
//! dn: mds-device-name=dev0, mds-host-name=hostA, mds-vo-name=local
//! mds-validfrom: 2025-10-16T13:58:00.123456Z
//! mds-cpu-speed: 1133
//! objectclass: MdsDevice
//! ```
//!
//! Attributes are written in attribute-name order, values in insertion
//! order. Entries are separated by one blank line.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::EntryError;
use crate::name::EntryName;
use crate::time::Timestamp;

pub const OBJECTCLASS: &str = "objectclass";
/// Line carrying the generation timestamp; not usable as an attribute.
pub const TIMESTAMP_ATTR: &str = "mds-validfrom";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    name: EntryName,
    attributes: BTreeMap<String, Vec<String>>,
    timestamp: Timestamp,
}

pub(crate) fn valid_attr_name(attr: &str) -> bool {
    !attr.is_empty()
        && attr != TIMESTAMP_ATTR
        && attr != "dn"
        && attr
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ';'))
}

fn valid_value(value: &str) -> bool {
    !value.contains(['\n', '\r'])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrSelection {
    All,
    Only(Vec<String>),
}

impl AttrSelection {
    pub fn parse(text: &str) -> Self {
        let text = text.trim();
        if text == "*" || text.is_empty() {
            return AttrSelection::All;
        }
        AttrSelection::Only(
            text.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        match self {
            AttrSelection::All => "*".to_string(),
            AttrSelection::Only(list) => list.join(","),
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, AttrSelection::All)
    }
}

impl Entry {
    pub fn builder(name: EntryName, timestamp: Timestamp) -> EntryBuilder {
        EntryBuilder { name, attributes: BTreeMap::new(), timestamp }
    }

    pub fn name(&self) -> &EntryName {
        &self.name
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn attributes(&self) -> &BTreeMap<String, Vec<String>> {
        &self.attributes
    }

    pub fn values(&self, attr: &str) -> Option<&[String]> {
        self.attributes.get(attr).map(Vec::as_slice)
    }

    pub fn has(&self, attr: &str) -> bool {
        self.attributes.contains_key(attr)
    }

    /// Copy restricted to the selected attributes. `objectclass` is always kept.
    pub fn project(&self, selection: &AttrSelection) -> Entry {
        match selection {
            AttrSelection::All => self.clone(),
            AttrSelection::Only(keep) => Entry {
                name: self.name.clone(),
                timestamp: self.timestamp,
                attributes: self
                    .attributes
                    .iter()
                    .filter(|(k, _)| k.as_str() == OBJECTCLASS || keep.iter().any(|a| a == *k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            },
        }
    }

    pub fn write_ldif(&self, out: &mut String) {
        let _ = writeln!(out, "dn: {}", self.name);
        let _ = writeln!(out, "{}: {}", TIMESTAMP_ATTR, self.timestamp);
        for (attr, values) in &self.attributes {
            for v in values {
                let _ = writeln!(out, "{attr}: {v}");
            }
        }
    }

    pub fn to_ldif(&self) -> String {
        let mut s = String::new();
        self.write_ldif(&mut s);
        s
    }

    /// Byte length of this entry's LDIF block.
    pub fn serialized_size(&self) -> usize {
        // "dn: " + name + "\n"
        let mut size = 4 + self.name.to_string().len() + 1;
        size += TIMESTAMP_ATTR.len() + 2 + 27 + 1;
        for (attr, values) in &self.attributes {
            for v in values {
                size += attr.len() + 2 + v.len() + 1;
            }
        }
        size
    }
}

#[derive(Debug, Clone)]
pub struct EntryBuilder {
    name: EntryName,
    attributes: BTreeMap<String, Vec<String>>,
    timestamp: Timestamp,
}

impl EntryBuilder {
    pub fn attr(mut self, attr: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.entry(attr.into()).or_default().push(value.into());
        self
    }

    pub fn build(self) -> Result<Entry, EntryError> {
        for (attr, values) in &self.attributes {
            if !valid_attr_name(attr) {
                return Err(EntryError::BadAttribute(attr.clone()));
            }
            if values.is_empty() {
                return Err(EntryError::NoValues(attr.clone()));
            }
            if !values.iter().all(|v| valid_value(v)) {
                return Err(EntryError::BadValue);
            }
        }
        if self.attributes.get(OBJECTCLASS).is_none_or(Vec::is_empty) {
            return Err(EntryError::MissingObjectClass);
        }
        Ok(Entry { name: self.name, attributes: self.attributes, timestamp: self.timestamp })
    }
}

pub fn write_ldif_all<'a>(entries: impl IntoIterator<Item = &'a Entry>) -> String {
    let mut out = String::new();
    for (i, e) in entries.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        e.write_ldif(&mut out);
    }
    out
}

fn ldif_err(line: usize, reason: impl Into<String>) -> EntryError {
    EntryError::Ldif { line, reason: reason.into() }
}

/// Parses a sequence of LDIF blocks.
pub fn parse_ldif(text: &str) -> Result<Vec<Entry>, EntryError> {
    let mut entries = Vec::new();
    let mut current: Option<(EntryBuilder, usize)> = None;
    let mut have_ts = false;

    for (idx, line) in text.split_terminator('\n').enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            let (b, start) = current.take().ok_or_else(|| ldif_err(lineno, "unexpected blank line"))?;
            if !have_ts {
                return Err(ldif_err(start, "missing timestamp"));
            }
            entries.push(b.build()?);
            have_ts = false;
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| ldif_err(lineno, "expected 'key: value'"))?;
        match (&mut current, key) {
            (None, "dn") => {
                let name = EntryName::parse(value)?;
                current = Some((Entry::builder(name, Timestamp(0)), lineno));
            }
            (None, _) => return Err(ldif_err(lineno, "entry must start with dn")),
            (Some(_), "dn") => return Err(ldif_err(lineno, "dn inside entry")),
            (Some((b, _)), TIMESTAMP_ATTR) => {
                if have_ts {
                    return Err(ldif_err(lineno, "duplicate timestamp"));
                }
                b.timestamp = Timestamp::parse_rfc3339(value)
                    .ok_or_else(|| ldif_err(lineno, format!("bad timestamp {value:?}")))?;
                have_ts = true;
            }
            (Some((b, _)), attr) => {
                b.attributes.entry(attr.to_string()).or_default().push(value.to_string());
            }
        }
    }
    if let Some((b, start)) = current {
        if !have_ts {
            return Err(ldif_err(start, "missing timestamp"));
        }
        entries.push(b.build()?);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample(i: usize) -> Entry {
        let name = EntryName::parse(&format!("mds-device-name=dev{i}, mds-vo-name=local")).unwrap();
        Entry::builder(name, Timestamp(1_700_000_000_000_000 + i as i64))
            .attr("objectclass", "MdsDevice")
            .attr("cpu", "1133")
            .attr("cpu", "1208")
            .attr("note", " leading space: and colon")
            .build()
            .unwrap()
    }

    #[test]
    fn objectclass_required() {
        let name = EntryName::parse("a=b").unwrap();
        assert_eq!(
            Entry::builder(name, Timestamp(0)).attr("cpu", "1").build(),
            Err(EntryError::MissingObjectClass)
        );
    }

    #[test]
    fn reserved_and_bad_attributes_rejected() {
        let name = EntryName::parse("a=b").unwrap();
        let e = Entry::builder(name.clone(), Timestamp(0))
            .attr("objectclass", "x")
            .attr(TIMESTAMP_ATTR, "y")
            .build();
        assert!(matches!(e, Err(EntryError::BadAttribute(_))));
        let e = Entry::builder(name, Timestamp(0)).attr("objectclass", "x\ny").build();
        assert_eq!(e, Err(EntryError::BadValue));
    }

    #[test]
    fn ldif_round_trip_and_size() {
        let entries: Vec<Entry> = (0..5).map(sample).collect();
        let text = write_ldif_all(&entries);
        assert_eq!(parse_ldif(&text).unwrap(), entries);
        let blocks: usize = entries.iter().map(Entry::serialized_size).sum();
        assert_eq!(text.len(), blocks + entries.len() - 1);
        assert_eq!(sample(0).to_ldif().len(), sample(0).serialized_size());
    }

    #[test]
    fn empty_ldif() {
        assert_eq!(parse_ldif("").unwrap(), vec![]);
    }

    #[test]
    fn projection_keeps_objectclass() {
        let e = sample(1).project(&AttrSelection::parse("cpu"));
        assert!(e.has("objectclass") && e.has("cpu") && !e.has("note"));
        assert_eq!(AttrSelection::parse(" * "), AttrSelection::All);
    }

    #[test]
    fn ldif_errors_carry_line_numbers() {
        let err = parse_ldif("dn: a=b\nobjectclass: x\n").unwrap_err();
        assert!(matches!(err, EntryError::Ldif { line: 1, .. }));
        let text = "dn: a=b\nmds-validfrom: 2025-10-16T13:58:00.000000Z\nobjectclass: x\n\n\n";
        assert!(matches!(parse_ldif(text).unwrap_err(), EntryError::Ldif { line: 5, .. }));
    }
}
