use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name")]
    Empty,
    #[error("empty attribute or value in name component")]
    EmptyComponent,
    #[error("dangling escape at end of name")]
    BadEscape,
    #[error("name component without '='")]
    MissingEquals,
    #[error("unescaped '=' inside a value")]
    UnescapedSeparator,
    #[error("control character in name")]
    ControlCharacter,
    #[error("unknown scope")]
    BadScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntryError {
    #[error("entry has no objectclass value")]
    MissingObjectClass,
    #[error("invalid attribute name {0:?}")]
    BadAttribute(String),
    #[error("attribute {0:?} has no values")]
    NoValues(String),
    #[error("attribute value contains a line break")]
    BadValue,
    #[error("ldif line {line}: {reason}")]
    Ldif { line: usize, reason: String },
    #[error(transparent)]
    Name(#[from] NameError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("filter syntax error at byte {0}")]
    Syntax(usize),
    #[error("and/or filter with no operands")]
    EmptyComposite,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("duplicate entry name {0}")]
    DuplicateName(String),
    #[error("entry {0} is outside the index suffix")]
    ForeignEntry(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("no such base entry {0}")]
    NoSuchBase(String),
    #[error("base {0} is outside the served suffix")]
    OutsideSuffix(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("malformed log line: {0}")]
    Malformed(&'static str),
    #[error("token contains whitespace or is empty: {0:?}")]
    BadToken(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TelemetryError {
    #[error("lifeline {0} is missing one or more phases")]
    IncompleteLifeline(String),
    #[error("no lifelines to summarize")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistrationError {
    #[error("registration ttl must be positive")]
    NonPositiveTtl,
    #[error("registration suffix {0} is outside the directory suffix")]
    ForeignSuffix(String),
    #[error("registration field {0} missing or malformed")]
    BadField(&'static str),
}
