//! Tag bus: typed tag store, line protocol, sessions, network servers and
//! historian.

mod codec;
mod historian;
mod server;
mod store;
mod tag;

pub use codec::{decode, encode, format_real, parse_value, DecodeError, EncodeError, Message, NakReason, Verb};
pub use historian::{Historian, HistorianRecord};
pub use server::{spawn_tcp, spawn_ws, ServerHandle, Session, SESSION_BUFFER};
pub use store::{Overrun, SessionId, TagDef, TagStore, STALE_PERIODS};
pub use tag::{Millis, Quality, Tag, TagName, Value, ValueKind, WireValue};

/// Default port of the line protocol.
pub const TCP_PORT: u16 = 7117;
/// Default port of the browser socket bridge.
pub const WS_PORT: u16 = 7118;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TagError {
    #[error("invalid tag name {0:?}")]
    BadName(String),
    #[error("invalid value {0:?}")]
    BadValue(String),
    #[error("tag {tag} holds {expected:?} values")]
    KindMismatch { tag: String, expected: ValueKind },
    #[error("tag {0} already defined")]
    Duplicate(String),
    #[error("no such tag {0}")]
    NoSuchTag(String),
}

#[derive(Debug, thiserror::Error)]
pub enum HistorianError {
    #[error("historian i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed historian record on line {line}")]
    Parse { line: usize },
    #[error("record for {tag} at {got} precedes {last}")]
    OutOfOrder { tag: String, last: Millis, got: Millis },
    #[error("empty query range {from}..{to}")]
    BadRange { from: Millis, to: Millis },
}
