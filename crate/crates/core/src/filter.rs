//! Search filters: presence, equality, conjunction and disjunction.
//!
//! Text form follows the familiar parenthesized prefix syntax:
//! `(objectclass=*)`, `(cpu=1133)`, `(&(a=*)(|(b=x)(c=y)))`. Inside a value
//! a backslash escapes the next character; `\*` is a literal asterisk.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::entry::Entry;
use crate::error::FilterError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Filter {
    Presence(String),
    Equality(String, String),
    And(Vec<Filter>),
    Or(Vec<Filter>),
}

impl Filter {
    pub fn presence(attr: impl Into<String>) -> Self {
        Filter::Presence(attr.into())
    }

    pub fn equality(attr: impl Into<String>, value: impl Into<String>) -> Self {
        Filter::Equality(attr.into(), value.into())
    }

    /// The universal filter used by full-tree queries.
    pub fn everything() -> Self {
        Filter::Presence(crate::entry::OBJECTCLASS.into())
    }

    pub fn matches(&self, entry: &Entry) -> bool {
        eval_filter(entry, self)
    }

    pub fn parse(text: &str) -> Result<Self, FilterError> {
        let mut p = Parser { src: text.as_bytes(), text, pos: 0 };
        let f = p.filter()?;
        if p.pos != text.len() {
            return Err(FilterError::Syntax(p.pos));
        }
        Ok(f)
    }
}

pub fn eval_filter(entry: &Entry, filter: &Filter) -> bool {
    match filter {
        Filter::Presence(attr) => entry.has(attr),
        Filter::Equality(attr, value) => entry
            .values(attr)
            .is_some_and(|vals| vals.iter().any(|v| v == value)),
        Filter::And(fs) => fs.iter().all(|f| eval_filter(entry, f)),
        Filter::Or(fs) => fs.iter().any(|f| eval_filter(entry, f)),
    }
}

fn attr_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b';')
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn expect(&mut self, b: u8) -> Result<(), FilterError> {
        if self.src.get(self.pos) == Some(&b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(FilterError::Syntax(self.pos))
        }
    }

    fn filter(&mut self) -> Result<Filter, FilterError> {
        self.expect(b'(')?;
        let f = match self.src.get(self.pos) {
            Some(b'&') => {
                self.pos += 1;
                Filter::And(self.list()?)
            }
            Some(b'|') => {
                self.pos += 1;
                Filter::Or(self.list()?)
            }
            _ => self.item()?,
        };
        self.expect(b')')?;
        Ok(f)
    }

    fn list(&mut self) -> Result<Vec<Filter>, FilterError> {
        let mut out = Vec::new();
        while self.src.get(self.pos) == Some(&b'(') {
            out.push(self.filter()?);
        }
        if out.is_empty() {
            return Err(FilterError::EmptyComposite);
        }
        Ok(out)
    }

    fn item(&mut self) -> Result<Filter, FilterError> {
        let start = self.pos;
        while self.src.get(self.pos).copied().is_some_and(attr_char) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(FilterError::Syntax(self.pos));
        }
        let attr = String::from(&self.text[start..self.pos]);
        self.expect(b'=')?;
        if self.src.get(self.pos) == Some(&b'*') && self.src.get(self.pos + 1) == Some(&b')') {
            self.pos += 1;
            return Ok(Filter::Presence(attr));
        }
        let mut value = String::new();
        let mut chars = self.text[self.pos..].char_indices();
        loop {
            let Some((off, ch)) = chars.next() else {
                return Err(FilterError::Syntax(self.text.len()));
            };
            match ch {
                ')' => {
                    self.pos += off;
                    break;
                }
                '\\' => match chars.next() {
                    Some((_, esc)) if esc != '\n' && esc != '\r' => value.push(esc),
                    _ => return Err(FilterError::Syntax(self.pos + off)),
                },
                '(' | '*' | '\n' | '\r' => return Err(FilterError::Syntax(self.pos + off)),
                c => value.push(c),
            }
        }
        Ok(Filter::Equality(attr, value))
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::Presence(a) => write!(f, "({a}=*)"),
            Filter::Equality(a, v) => {
                write!(f, "({a}=")?;
                for ch in v.chars() {
                    if matches!(ch, '(' | ')' | '*' | '\\') {
                        f.write_str("\\")?;
                    }
                    fmt::Write::write_char(f, ch)?;
                }
                f.write_str(")")
            }
            Filter::And(fs) | Filter::Or(fs) => {
                f.write_str(if matches!(self, Filter::And(_)) { "(&" } else { "(|" })?;
                for sub in fs {
                    write!(f, "{sub}")?;
                }
                f.write_str(")")
            }
        }
    }
}
