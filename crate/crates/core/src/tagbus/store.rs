use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{SyncSender, TrySendError};
use std::sync::{Arc, Mutex, RwLock};

use super::codec::{Message, NakReason};
use super::historian::{Historian, HistorianRecord};
use super::tag::{Millis, Quality, Tag, TagName, Value, ValueKind, WireValue};
use super::TagError;

/// Producer-period multiple after which a silent tag turns STALE.
pub const STALE_PERIODS: u64 = 5;

/// Static description of a tag. Only the `cmd` namespace accepts client
/// writes.
#[derive(Debug, Clone, PartialEq)]
pub struct TagDef {
    pub name: TagName,
    pub kind: ValueKind,
    pub units: String,
    /// Producer update period; `None` for event-driven tags (never STALE).
    pub period_ms: Option<Millis>,
}

impl TagDef {
    pub fn new(name: TagName, kind: ValueKind, units: impl Into<String>) -> Self {
        TagDef {
            name,
            kind,
            units: units.into(),
            period_ms: None,
        }
    }

    pub fn with_period(mut self, period_ms: Millis) -> Self {
        self.period_ms = Some(period_ms);
        self
    }

    pub fn client_writable(&self) -> bool {
        self.name.namespace() == "cmd"
    }
}

#[derive(Debug, Clone)]
struct Entry {
    def: TagDef,
    value: Value,
    quality: Quality,
    timestamp: Millis,
    seq: u64,
}

impl Entry {
    fn snapshot(&self) -> Tag {
        Tag {
            name: self.def.name.clone(),
            value: self.value.clone(),
            quality: self.quality,
            timestamp: self.timestamp,
            units: self.def.units.clone(),
        }
    }

    fn data(&self) -> Message {
        Message::Data {
            tag: self.def.name.clone(),
            value: self.value.to_wire(),
            quality: self.quality,
            timestamp: self.timestamp,
        }
    }
}

pub type SessionId = u64;

/// Marker set when a session's outgoing buffer overflowed.
#[derive(Debug, Default)]
pub struct Overrun(Mutex<Option<TagName>>, std::sync::atomic::AtomicBool);

impl Overrun {
    pub fn trip(&self, tag: Option<TagName>) {
        if !self.1.swap(true, Ordering::SeqCst) {
            *self.0.lock().expect("overrun lock") = tag;
        }
    }

    pub fn is_set(&self) -> bool {
        self.1.load(Ordering::SeqCst)
    }

    pub fn tag(&self) -> Option<TagName> {
        self.0.lock().expect("overrun lock").clone()
    }
}

struct Subscriber {
    tags: HashSet<TagName>,
    tx: SyncSender<Message>,
    overrun: Arc<Overrun>,
}

#[derive(Default)]
struct State {
    tags: BTreeMap<TagName, Entry>,
    subscribers: HashMap<SessionId, Subscriber>,
}

/// Tag database shared by the simulation loop and protocol sessions.
///
/// Each commit updates value, quality, timestamp and sequence number under
/// one lock, so readers never see a torn tag, and subscribers receive the
/// DATA frame in commit order.
#[derive(Default)]
pub struct TagStore {
    state: RwLock<State>,
    clock: AtomicU64,
    next_session: AtomicU64,
    historian: Mutex<Option<Historian>>,
}

impl TagStore {
    pub fn new() -> Self {
        TagStore::default()
    }

    /// Every subsequent commit is also appended to `historian`.
    pub fn attach_historian(&self, historian: Historian) {
        *self.historian.lock().expect("historian lock") = Some(historian);
    }

    pub fn detach_historian(&self) -> Option<Historian> {
        self.historian.lock().expect("historian lock").take()
    }

    pub fn flush_historian(&self) {
        if let Some(h) = self.historian.lock().expect("historian lock").as_mut() {
            if let Err(e) = h.flush() {
                log::warn!("historian flush failed: {e}");
            }
        }
    }

    /// Runs `f` against the attached historian, if any.
    pub fn with_historian<R>(&self, f: impl FnOnce(&Historian) -> R) -> Option<R> {
        self.historian.lock().expect("historian lock").as_ref().map(f)
    }

    pub fn set_clock(&self, now: Millis) {
        self.clock.store(now, Ordering::SeqCst);
    }

    pub fn now(&self) -> Millis {
        self.clock.load(Ordering::SeqCst)
    }

    /// Registers a tag with an initial value (GOOD, stamped with the clock).
    pub fn define(&self, def: TagDef, initial: Value) -> Result<(), TagError> {
        if initial.kind() != def.kind {
            return Err(TagError::KindMismatch {
                tag: def.name.to_string(),
                expected: def.kind,
            });
        }
        let mut st = self.state.write().expect("store lock");
        if st.tags.contains_key(&def.name) {
            return Err(TagError::Duplicate(def.name.to_string()));
        }
        let entry = Entry {
            value: initial,
            quality: Quality::Good,
            timestamp: self.now(),
            seq: 0,
            def,
        };
        st.tags.insert(entry.def.name.clone(), entry);
        Ok(())
    }

    pub fn def(&self, name: &str) -> Option<TagDef> {
        let st = self.state.read().expect("store lock");
        st.tags.iter().find(|(k, _)| k.as_str() == name).map(|(_, e)| e.def.clone())
    }

    pub fn contains(&self, name: &TagName) -> bool {
        self.state.read().expect("store lock").tags.contains_key(name)
    }

    pub fn get(&self, name: &TagName) -> Option<Tag> {
        self.state.read().expect("store lock").tags.get(name).map(Entry::snapshot)
    }

    /// Value and commit sequence number read atomically.
    pub fn get_with_seq(&self, name: &TagName) -> Option<(Tag, u64)> {
        let st = self.state.read().expect("store lock");
        st.tags.get(name).map(|e| (e.snapshot(), e.seq))
    }

    pub fn snapshot(&self) -> Vec<Tag> {
        self.state.read().expect("store lock").tags.values().map(Entry::snapshot).collect()
    }

    pub fn names(&self) -> Vec<TagName> {
        self.state.read().expect("store lock").tags.keys().cloned().collect()
    }

    /// Producer write, stamped with the store clock.
    pub fn commit(&self, name: &TagName, value: Value, quality: Quality) -> Result<Tag, TagError> {
        self.commit_at(name, value, quality, self.now())
    }

    /// Producer write with an explicit timestamp. Timestamps never move
    /// backwards: an older stamp is raised to the tag's last one.
    pub fn commit_at(&self, name: &TagName, value: Value, quality: Quality, timestamp: Millis) -> Result<Tag, TagError> {
        let mut st = self.state.write().expect("store lock");
        let State { tags, subscribers } = &mut *st;
        let entry = tags.get_mut(name).ok_or_else(|| TagError::NoSuchTag(name.to_string()))?;
        let value = coerce(entry.def.kind, value).ok_or_else(|| TagError::KindMismatch {
            tag: name.to_string(),
            expected: entry.def.kind,
        })?;
        entry.value = value;
        entry.quality = quality;
        entry.timestamp = timestamp.max(entry.timestamp);
        entry.seq += 1;
        let snapshot = entry.snapshot();
        publish(subscribers, entry);
        self.archive(entry);
        Ok(snapshot)
    }

    /// Client write from the protocol: only `cmd.*` tags accept it.
    pub fn poke(&self, name: &TagName, wire: &WireValue) -> Result<Tag, NakReason> {
        let def = {
            let st = self.state.read().expect("store lock");
            st.tags.get(name).map(|e| e.def.clone()).ok_or(NakReason::NoSuchTag)?
        };
        if !def.client_writable() {
            return Err(NakReason::ReadOnly);
        }
        let value = Value::from_wire(def.kind, wire).map_err(|_| NakReason::BadValue)?;
        self.commit(name, value, Quality::Good).map_err(|_| NakReason::BadValue)
    }

    /// Marks STALE every periodic tag not updated for
    /// `STALE_PERIODS × period` at the current clock.
    pub fn refresh_staleness(&self) -> usize {
        let now = self.now();
        let mut st = self.state.write().expect("store lock");
        let State { tags, subscribers } = &mut *st;
        let mut marked = 0;
        for entry in tags.values_mut() {
            let Some(period) = entry.def.period_ms else { continue };
            if entry.quality != Quality::Stale && now.saturating_sub(entry.timestamp) > STALE_PERIODS * period {
                entry.quality = Quality::Stale;
                entry.timestamp = now.max(entry.timestamp);
                entry.seq += 1;
                publish(subscribers, entry);
                self.archive(entry);
                marked += 1;
            }
        }
        marked
    }

    pub(crate) fn open_subscriber(&self, tx: SyncSender<Message>, overrun: Arc<Overrun>) -> SessionId {
        let id = self.next_session.fetch_add(1, Ordering::SeqCst);
        self.state.write().expect("store lock").subscribers.insert(
            id,
            Subscriber {
                tags: HashSet::new(),
                tx,
                overrun,
            },
        );
        id
    }

    pub(crate) fn close_subscriber(&self, id: SessionId) {
        self.state.write().expect("store lock").subscribers.remove(&id);
    }

    pub(crate) fn subscribe(&self, id: SessionId, name: &TagName) -> Result<(), NakReason> {
        let mut st = self.state.write().expect("store lock");
        if !st.tags.contains_key(name) {
            return Err(NakReason::NoSuchTag);
        }
        let sub = st.subscribers.get_mut(&id).ok_or(NakReason::Overrun)?;
        sub.tags.insert(name.clone());
        Ok(())
    }

    pub(crate) fn unsubscribe(&self, id: SessionId, name: &TagName) -> Result<(), NakReason> {
        let mut st = self.state.write().expect("store lock");
        if !st.tags.contains_key(name) {
            return Err(NakReason::NoSuchTag);
        }
        if let Some(sub) = st.subscribers.get_mut(&id) {
            sub.tags.remove(name);
        }
        Ok(())
    }

    fn archive(&self, entry: &Entry) {
        let mut hist = self.historian.lock().expect("historian lock");
        if let Some(h) = hist.as_mut() {
            let rec = HistorianRecord {
                tag: entry.def.name.clone(),
                timestamp: entry.timestamp,
                value: entry.value.to_wire(),
                quality: entry.quality,
            };
            if let Err(e) = h.append(rec) {
                log::warn!("historian append failed: {e}");
            }
        }
    }
}

fn coerce(kind: ValueKind, value: Value) -> Option<Value> {
    match (kind, value) {
        (k, v) if v.kind() == k => Some(v),
        (ValueKind::Real, Value::Int(i)) => Some(Value::Real(i as f64)),
        (ValueKind::Real, Value::Bool(b)) => Some(Value::Real(if b { 1.0 } else { 0.0 })),
        (ValueKind::Bool, Value::Int(i @ (0 | 1))) => Some(Value::Bool(i == 1)),
        _ => None,
    }
}

/// Pushes the entry's DATA frame to every subscriber of it. A subscriber
/// whose buffer is full is dropped and flagged as overrun.
fn publish(subscribers: &mut HashMap<SessionId, Subscriber>, entry: &Entry) {
    let mut dropped = Vec::new();
    for (id, sub) in subscribers.iter() {
        if !sub.tags.contains(&entry.def.name) {
            continue;
        }
        match sub.tx.try_send(entry.data()) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => {
                sub.overrun.trip(Some(entry.def.name.clone()));
                dropped.push(*id);
            }
            Err(TrySendError::Disconnected(_)) => dropped.push(*id),
        }
    }
    for id in dropped {
        subscribers.remove(&id);
    }
}
