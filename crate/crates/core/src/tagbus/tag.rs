use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::codec::format_real;
use super::TagError;

/// Milliseconds since the Unix epoch.
pub type Millis = u64;

/// Dotted lowercase tag name: `[a-z0-9_]+(\.[a-z0-9_]+)+`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TagName(String);

impl TagName {
    pub fn new(name: impl Into<String>) -> Result<Self, TagError> {
        let name = name.into();
        if is_valid_name(&name) {
            Ok(TagName(name))
        } else {
            Err(TagError::BadName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First dotted segment (`plant`, `ctl`, `cmd`, ...).
    pub fn namespace(&self) -> &str {
        self.0.split('.').next().unwrap_or_default()
    }
}

fn is_valid_name(name: &str) -> bool {
    let mut segments = 0;
    for seg in name.split('.') {
        if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
            return false;
        }
        segments += 1;
    }
    segments >= 2
}

impl TryFrom<String> for TagName {
    type Error = TagError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        TagName::new(s)
    }
}

impl From<TagName> for String {
    fn from(t: TagName) -> Self {
        t.0
    }
}

impl FromStr for TagName {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TagName::new(s)
    }
}

impl fmt::Display for TagName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for TagName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Quality {
    Good,
    Bad,
    Stale,
}

impl Quality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quality::Good => "GOOD",
            Quality::Bad => "BAD",
            Quality::Stale => "STALE",
        }
    }

    pub fn is_good(&self) -> bool {
        *self == Quality::Good
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quality {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GOOD" => Ok(Quality::Good),
            "BAD" => Ok(Quality::Bad),
            "STALE" => Ok(Quality::Stale),
            _ => Err(TagError::BadValue(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Real,
    Bool,
    Int,
    Enum,
}

/// Typed tag value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Bool(bool),
    Int(i64),
    Enum(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Real(_) => ValueKind::Real,
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) => ValueKind::Int,
            Value::Enum(_) => ValueKind::Enum,
        }
    }

    /// Numeric view; booleans read as 0/1, enums as `None`.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Int(i) => Some(*i as f64),
            Value::Enum(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Int(i) => Some(*i != 0),
            Value::Real(v) => Some(*v != 0.0),
            Value::Enum(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Enum(s) => Some(s),
            _ => None,
        }
    }

    pub fn default_for(kind: ValueKind) -> Value {
        match kind {
            ValueKind::Real => Value::Real(0.0),
            ValueKind::Bool => Value::Bool(false),
            ValueKind::Int => Value::Int(0),
            ValueKind::Enum => Value::Enum("none".into()),
        }
    }

    pub fn to_wire(&self) -> WireValue {
        match self {
            Value::Real(v) => WireValue::Real(*v),
            Value::Bool(b) => WireValue::Int(i64::from(*b)),
            Value::Int(i) => WireValue::Int(*i),
            Value::Enum(s) => WireValue::Text(s.clone()),
        }
    }

    /// Interprets a wire value as `kind`. Integers widen to reals and 0/1
    /// read as booleans; nothing else converts.
    pub fn from_wire(kind: ValueKind, wire: &WireValue) -> Result<Value, TagError> {
        match (kind, wire) {
            (ValueKind::Real, WireValue::Real(v)) => Ok(Value::Real(*v)),
            (ValueKind::Real, WireValue::Int(i)) => Ok(Value::Real(*i as f64)),
            (ValueKind::Int, WireValue::Int(i)) => Ok(Value::Int(*i)),
            (ValueKind::Bool, WireValue::Int(0)) => Ok(Value::Bool(false)),
            (ValueKind::Bool, WireValue::Int(1)) => Ok(Value::Bool(true)),
            (ValueKind::Enum, WireValue::Text(s)) => Ok(Value::Enum(s.clone())),
            _ => Err(TagError::BadValue(wire.to_string())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_wire().fmt(f)
    }
}

/// Value as carried on the wire, typed only by its lexical form: bare
/// digits are integers, numbers with a `.` or exponent are reals, tokens
/// starting with a letter are text.
#[derive(Debug, Clone, PartialEq)]
pub enum WireValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for WireValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireValue::Int(i) => write!(f, "{i}"),
            WireValue::Real(v) => f.write_str(&format_real(*v)),
            WireValue::Text(s) => f.write_str(s),
        }
    }
}

/// Snapshot of one tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Tag {
    pub name: TagName,
    pub value: Value,
    pub quality: Quality,
    pub timestamp: Millis,
    pub units: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_grammar() {
        for ok in ["plant.n_hpt", "cmd.start", "a.b.c", "x1.y_2", "0.0"] {
            assert!(TagName::new(ok).is_ok(), "{ok}");
        }
        for bad in ["Bad Name", "plant", "plant.", ".plant", "plant..x", "Plant.x", "a.b-c", "a b.c", ""] {
            assert!(TagName::new(bad).is_err(), "{bad}");
        }
        assert_eq!(TagName::new("ctl.seq").unwrap().namespace(), "ctl");
    }

    #[test]
    fn wire_coercions() {
        assert_eq!(Value::from_wire(ValueKind::Bool, &WireValue::Int(1)).unwrap(), Value::Bool(true));
        assert!(Value::from_wire(ValueKind::Bool, &WireValue::Int(2)).is_err());
        assert_eq!(Value::from_wire(ValueKind::Real, &WireValue::Int(3)).unwrap(), Value::Real(3.0));
        assert!(Value::from_wire(ValueKind::Int, &WireValue::Real(3.0)).is_err());
        assert!(Value::from_wire(ValueKind::Enum, &WireValue::Int(3)).is_err());
        assert_eq!(Value::Bool(true).to_wire(), WireValue::Int(1));
    }
}
