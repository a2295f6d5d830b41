//! Hierarchical entry names.
//!
//! A name is a non-empty list of `attr=value` components, most specific
//! first, written with `, ` between components:
//!
//! ```text
//! mds-device-name=dev0, mds-host-name=hostA, mds-vo-name=local
//! ```
//!
//! A backslash escapes the next character. Whitespace around `,` and `=`
//! is trimmed unless escaped. Comparison is byte-exact and case-sensitive.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::NameError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rdn {
    pub attr: String,
    pub value: String,
}

impl Rdn {
    pub fn new(attr: impl Into<String>, value: impl Into<String>) -> Result<Self, NameError> {
        let rdn = Self { attr: attr.into(), value: value.into() };
        validate_part(&rdn.attr)?;
        validate_part(&rdn.value)?;
        Ok(rdn)
    }
}

fn validate_part(part: &str) -> Result<(), NameError> {
    if part.is_empty() {
        return Err(NameError::EmptyComponent);
    }
    if part.chars().any(|c| c == '\n' || c == '\r' || c == '\0') {
        return Err(NameError::ControlCharacter);
    }
    Ok(())
}

/// A distinguished name: components ordered most-specific first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntryName {
    components: Vec<Rdn>,
}

/// Search scope relative to a base name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Base,
    OneLevel,
    Subtree,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Base => "base",
            Scope::OneLevel => "one",
            Scope::Subtree => "sub",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Scope::Base),
            "one" | "onelevel" | "one-level" => Ok(Scope::OneLevel),
            "sub" | "subtree" => Ok(Scope::Subtree),
            _ => Err(NameError::BadScope),
        }
    }
}

impl EntryName {
    pub fn from_components(components: Vec<Rdn>) -> Result<Self, NameError> {
        if components.is_empty() {
            return Err(NameError::Empty);
        }
        for c in &components {
            validate_part(&c.attr)?;
            validate_part(&c.value)?;
        }
        Ok(Self { components })
    }

    pub fn parse(text: &str) -> Result<Self, NameError> {
        parse_name(text)
    }

    pub fn components(&self) -> &[Rdn] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    /// Always false; names have at least one component.
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn rdn(&self) -> &Rdn {
        &self.components[0]
    }

    /// The immediate parent, or `None` for a single-component name.
    pub fn parent(&self) -> Option<EntryName> {
        if self.components.len() <= 1 {
            return None;
        }
        Some(Self { components: self.components[1..].to_vec() })
    }

    /// A new name with `rdn` prepended beneath `self`.
    pub fn child(&self, rdn: Rdn) -> EntryName {
        let mut components = Vec::with_capacity(self.components.len() + 1);
        components.push(rdn);
        components.extend(self.components.iter().cloned());
        Self { components }
    }

    /// True when `self` equals `ancestor` or sits somewhere beneath it.
    pub fn is_within(&self, ancestor: &EntryName) -> bool {
        let n = ancestor.components.len();
        self.components.len() >= n
            && self.components[self.components.len() - n..] == ancestor.components[..]
    }

    /// Depth of `self` below `ancestor`, if it is within it.
    pub fn depth_below(&self, ancestor: &EntryName) -> Option<usize> {
        self.is_within(ancestor)
            .then(|| self.components.len() - ancestor.components.len())
    }

    pub fn in_scope(&self, base: &EntryName, scope: Scope) -> bool {
        matches!(
            (self.depth_below(base), scope),
            (Some(0), Scope::Base) | (Some(1), Scope::OneLevel) | (Some(_), Scope::Subtree)
        )
    }

    /// Whether any name inside the subtree rooted at `self` can fall into
    /// the scope of (`base`, `scope`). Used to route a request to the
    /// providers or registered servers owning a subtree.
    pub fn subtree_intersects(&self, base: &EntryName, scope: Scope) -> bool {
        if base.is_within(self) {
            return true;
        }
        match scope {
            Scope::Base => false,
            Scope::OneLevel => self.depth_below(base) == Some(1),
            Scope::Subtree => self.is_within(base),
        }
    }

    /// Key whose lexicographic order places every subtree in one contiguous
    /// range: components root-first, each terminated by a separator byte
    /// that sorts below any other character.
    pub(crate) fn index_key(&self) -> String {
        let mut key = String::new();
        for c in self.components.iter().rev() {
            push_key_part(&mut key, &c.attr);
            key.push('\u{1}');
            push_key_part(&mut key, &c.value);
            key.push('\u{0}');
        }
        key
    }
}

fn push_key_part(key: &mut String, part: &str) {
    // \0 and \1 are rejected by validate_part / never produced by parse for
    // \0; \1 is escaped so it cannot collide with the separators.
    for ch in part.chars() {
        if ch == '\u{1}' || ch == '\u{2}' {
            key.push('\u{2}');
        }
        key.push(ch);
    }
}

/// Parses a textual name.
pub fn parse_name(text: &str) -> Result<EntryName, NameError> {
    if text.trim().is_empty() {
        return Err(NameError::Empty);
    }
    let mut components = Vec::new();
    let mut attr: Option<String> = None;
    let mut buf = String::new();
    // Length of `buf` up to and including the last escaped char; trailing
    // whitespace beyond it is trimmed.
    let mut protected = 0usize;
    let mut chars = text.chars();

    let finish = |buf: &mut String, protected: &mut usize| -> String {
        let keep = buf.trim_end().len().max(*protected);
        let out = String::from(&buf[..keep]);
        buf.clear();
        *protected = 0;
        out
    };

    while let Some(ch) = chars.next() {
        match ch {
            '\\' => {
                let esc = chars.next().ok_or(NameError::BadEscape)?;
                buf.push(esc);
                protected = buf.len();
            }
            '=' if attr.is_none() => {
                let a = finish(&mut buf, &mut protected);
                validate_part(&a)?;
                attr = Some(a);
            }
            ',' => {
                let a = attr.take().ok_or(NameError::MissingEquals)?;
                let v = finish(&mut buf, &mut protected);
                validate_part(&v)?;
                components.push(Rdn { attr: a, value: v });
            }
            c if c.is_whitespace() && buf.is_empty() => {}
            '=' => return Err(NameError::UnescapedSeparator),
            c => buf.push(c),
        }
    }
    let a = attr.ok_or(NameError::MissingEquals)?;
    let v = finish(&mut buf, &mut protected);
    validate_part(&v)?;
    components.push(Rdn { attr: a, value: v });
    Ok(EntryName { components })
}

fn write_escaped(f: &mut fmt::Formatter<'_>, part: &str) -> fmt::Result {
    let last = part.chars().count().saturating_sub(1);
    for (i, ch) in part.chars().enumerate() {
        let edge_space = ch.is_whitespace() && (i == 0 || i == last);
        if matches!(ch, ',' | '=' | '\\') || edge_space {
            f.write_str("\\")?;
        }
        fmt::Write::write_char(f, ch)?;
    }
    Ok(())
}

impl fmt::Display for EntryName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_escaped(f, &c.attr)?;
            f.write_str("=")?;
            write_escaped(f, &c.value)?;
        }
        Ok(())
    }
}

impl FromStr for EntryName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_name(s)
    }
}
