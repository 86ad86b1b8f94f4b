//! Line codec for the tag protocol.
//!
//! One message per line, single-space separated, UTF-8, `\n` terminated:
//!
//! ```text
//! REQUEST <tag>
//! POKE <tag> <value>
//! ADVISE <tag>
//! UNADVISE <tag>
//! DATA <tag> <value> <quality> <timestamp_ms>
//! ACK <tag>
//! NAK <tag|-> <reason>
//! ```
//!
//! Booleans travel as `0`/`1`, reals with up to 9 significant digits and
//! always a `.` (or exponent), enum values as bare words.

use std::fmt;

use super::tag::{Millis, Quality, TagName, WireValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Request,
    Poke,
    Advise,
    Unadvise,
    Data,
    Ack,
    Nak,
}

impl Verb {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verb::Request => "REQUEST",
            Verb::Poke => "POKE",
            Verb::Advise => "ADVISE",
            Verb::Unadvise => "UNADVISE",
            Verb::Data => "DATA",
            Verb::Ack => "ACK",
            Verb::Nak => "NAK",
        }
    }

    fn parse(s: &str) -> Option<Verb> {
        Some(match s {
            "REQUEST" => Verb::Request,
            "POKE" => Verb::Poke,
            "ADVISE" => Verb::Advise,
            "UNADVISE" => Verb::Unadvise,
            "DATA" => Verb::Data,
            "ACK" => Verb::Ack,
            "NAK" => Verb::Nak,
            _ => return None,
        })
    }

    /// Number of space-separated fields including the verb.
    fn arity(&self) -> usize {
        match self {
            Verb::Request | Verb::Advise | Verb::Unadvise | Verb::Ack => 2,
            Verb::Poke | Verb::Nak => 3,
            Verb::Data => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NakReason {
    BadVerb,
    BadArity,
    BadValue,
    BadTag,
    ReadOnly,
    NoSuchTag,
    Overrun,
}

impl NakReason {
    pub const ALL: [NakReason; 7] = [
        NakReason::BadVerb,
        NakReason::BadArity,
        NakReason::BadValue,
        NakReason::BadTag,
        NakReason::ReadOnly,
        NakReason::NoSuchTag,
        NakReason::Overrun,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NakReason::BadVerb => "bad-verb",
            NakReason::BadArity => "bad-arity",
            NakReason::BadValue => "bad-value",
            NakReason::BadTag => "bad-tag",
            NakReason::ReadOnly => "read-only",
            NakReason::NoSuchTag => "no-such-tag",
            NakReason::Overrun => "overrun",
        }
    }

    fn parse(s: &str) -> Option<NakReason> {
        NakReason::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for NakReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Request { tag: TagName },
    Poke { tag: TagName, value: WireValue },
    Advise { tag: TagName },
    Unadvise { tag: TagName },
    Data { tag: TagName, value: WireValue, quality: Quality, timestamp: Millis },
    Ack { tag: TagName },
    /// `tag` is `None` when the offending line carried no usable tag.
    Nak { tag: Option<TagName>, reason: NakReason },
}

impl Message {
    pub fn verb(&self) -> Verb {
        match self {
            Message::Request { .. } => Verb::Request,
            Message::Poke { .. } => Verb::Poke,
            Message::Advise { .. } => Verb::Advise,
            Message::Unadvise { .. } => Verb::Unadvise,
            Message::Data { .. } => Verb::Data,
            Message::Ack { .. } => Verb::Ack,
            Message::Nak { .. } => Verb::Nak,
        }
    }

    pub fn tag(&self) -> Option<&TagName> {
        match self {
            Message::Request { tag }
            | Message::Poke { tag, .. }
            | Message::Advise { tag }
            | Message::Unadvise { tag }
            | Message::Data { tag, .. }
            | Message::Ack { tag } => Some(tag),
            Message::Nak { tag, .. } => tag.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("value {0:?} cannot be carried on the wire")]
    BadValue(String),
}

/// Decode failure, carrying the NAK reason and the tag when one was parsed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{reason}")]
pub struct DecodeError {
    pub reason: NakReason,
    pub tag: Option<TagName>,
}

impl DecodeError {
    fn new(reason: NakReason) -> Self {
        DecodeError { reason, tag: None }
    }

    pub fn to_nak(&self) -> Message {
        Message::Nak {
            tag: self.tag.clone(),
            reason: self.reason,
        }
    }
}

/// Formats a finite real with at most 9 significant digits, always with a
/// decimal point or exponent so it never reads back as an integer.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("exponent");
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if neg { "-" } else { "" };
    if (-5..15).contains(&exp) {
        let n = digits.len() as i32;
        let body = if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else if exp + 1 >= n {
            format!("{}{}.0", digits, "0".repeat((exp + 1 - n) as usize))
        } else {
            let split = (exp + 1) as usize;
            format!("{}.{}", &digits[..split], &digits[split..])
        };
        format!("{sign}{body}")
    } else {
        let (head, tail) = digits.split_at(1);
        let tail = if tail.is_empty() { "0" } else { tail };
        format!("{sign}{head}.{tail}e{exp}")
    }
}

fn is_text_token(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || "_-.,:".contains(c))
}

fn encode_value(v: &WireValue) -> Result<String, EncodeError> {
    match v {
        WireValue::Real(x) if !x.is_finite() => Err(EncodeError::BadValue(x.to_string())),
        WireValue::Text(s) if !is_text_token(s) => Err(EncodeError::BadValue(s.clone())),
        other => Ok(other.to_string()),
    }
}

/// Parses one value token by its lexical form.
pub fn parse_value(tok: &str) -> Option<WireValue> {
    let first = tok.chars().next()?;
    if first.is_ascii_alphabetic() || first == '_' {
        return is_text_token(tok).then(|| WireValue::Text(tok.to_string()));
    }
    let unsigned = tok.strip_prefix('-').unwrap_or(tok);
    if !unsigned.is_empty() && unsigned.bytes().all(|b| b.is_ascii_digit()) {
        return tok.parse().ok().map(WireValue::Int);
    }
    if !(first.is_ascii_digit() || first == '-') {
        return None;
    }
    let x: f64 = tok.parse().ok()?;
    x.is_finite().then_some(WireValue::Real(x))
}

/// Encodes one message as a `\n`-terminated line.
pub fn encode(msg: &Message) -> Result<String, EncodeError> {
    let verb = msg.verb().as_str();
    let line = match msg {
        Message::Request { tag } | Message::Advise { tag } | Message::Unadvise { tag } | Message::Ack { tag } => {
            format!("{verb} {tag}\n")
        }
        Message::Poke { tag, value } => format!("{verb} {tag} {}\n", encode_value(value)?),
        Message::Data {
            tag,
            value,
            quality,
            timestamp,
        } => format!("{verb} {tag} {} {quality} {timestamp}\n", encode_value(value)?),
        Message::Nak { tag, reason } => {
            let tag = tag.as_ref().map(TagName::as_str).unwrap_or("-");
            format!("{verb} {tag} {reason}\n")
        }
    };
    Ok(line)
}

/// Decodes one line (the trailing `\n` or `\r\n` is optional).
pub fn decode(line: &[u8]) -> Result<Message, DecodeError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let text = std::str::from_utf8(line).map_err(|_| DecodeError::new(NakReason::BadValue))?;
    let fields: Vec<&str> = text.split(' ').collect();
    let verb = Verb::parse(fields[0]).ok_or(DecodeError::new(NakReason::BadVerb))?;
    if fields.len() != verb.arity() || fields.iter().any(|f| f.is_empty()) {
        return Err(DecodeError::new(NakReason::BadArity));
    }

    if verb == Verb::Nak {
        let tag = match fields[1] {
            "-" => None,
            t => Some(TagName::new(t).map_err(|_| DecodeError::new(NakReason::BadTag))?),
        };
        let reason = NakReason::parse(fields[2]).ok_or(DecodeError {
            reason: NakReason::BadValue,
            tag: tag.clone(),
        })?;
        return Ok(Message::Nak { tag, reason });
    }

    let tag = TagName::new(fields[1]).map_err(|_| DecodeError::new(NakReason::BadTag))?;
    let bad_value = || DecodeError {
        reason: NakReason::BadValue,
        tag: Some(tag.clone()),
    };
    Ok(match verb {
        Verb::Request => Message::Request { tag },
        Verb::Advise => Message::Advise { tag },
        Verb::Unadvise => Message::Unadvise { tag },
        Verb::Ack => Message::Ack { tag },
        Verb::Poke => {
            let value = parse_value(fields[2]).ok_or_else(bad_value)?;
            Message::Poke { tag, value }
        }
        Verb::Data => {
            let value = parse_value(fields[2]).ok_or_else(bad_value)?;
            let quality = fields[3].parse::<Quality>().map_err(|_| bad_value())?;
            let timestamp = fields[4]
                .bytes()
                .all(|b| b.is_ascii_digit())
                .then(|| fields[4].parse::<Millis>().ok())
                .flatten()
                .ok_or_else(bad_value)?;
            Message::Data {
                tag,
                value,
                quality,
                timestamp,
            }
        }
        Verb::Nak => unreachable!("handled above"),
    })
}
