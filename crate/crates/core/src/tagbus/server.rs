use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::codec::{decode, encode, Message, NakReason};
use super::store::{Overrun, SessionId, TagStore};

/// Outgoing messages a session may hold before it is dropped as overrun.
pub const SESSION_BUFFER: usize = 4096;

const POLL: Duration = Duration::from_millis(20);

/// One client conversation, independent of transport. Requests go in
/// through [`Session::handle_line`]; replies and pushed DATA come out of
/// [`Session::recv`] in order.
pub struct Session {
    id: SessionId,
    store: Arc<TagStore>,
    tx: SyncSender<Message>,
    rx: Mutex<Receiver<Message>>,
    overrun: Arc<Overrun>,
}

impl Session {
    pub fn open(store: Arc<TagStore>) -> Session {
        Session::with_capacity(store, SESSION_BUFFER)
    }

    pub fn with_capacity(store: Arc<TagStore>, capacity: usize) -> Session {
        let (tx, rx) = sync_channel(capacity);
        let overrun = Arc::new(Overrun::default());
        let id = store.open_subscriber(tx.clone(), overrun.clone());
        Session {
            id,
            store,
            tx,
            rx: Mutex::new(rx),
            overrun,
        }
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn handle_line(&self, line: &[u8]) {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        match decode(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.push(e.to_nak()),
        }
    }

    pub fn handle(&self, msg: Message) {
        let reply = match msg {
            Message::Request { tag } => match self.store.get(&tag) {
                Some(t) => Message::Data {
                    value: t.value.to_wire(),
                    quality: t.quality,
                    timestamp: t.timestamp,
                    tag,
                },
                None => nak(tag, NakReason::NoSuchTag),
            },
            Message::Poke { tag, value } => match self.store.poke(&tag, &value) {
                Ok(_) => Message::Ack { tag },
                Err(reason) => nak(tag, reason),
            },
            Message::Advise { tag } => match self.store.subscribe(self.id, &tag) {
                Ok(()) => Message::Ack { tag },
                Err(reason) => nak(tag, reason),
            },
            Message::Unadvise { tag } => match self.store.unsubscribe(self.id, &tag) {
                Ok(()) => Message::Ack { tag },
                Err(reason) => nak(tag, reason),
            },
            other => Message::Nak {
                tag: other.tag().cloned(),
                reason: NakReason::BadVerb,
            },
        };
        self.push(reply);
    }

    fn push(&self, msg: Message) {
        match self.tx.try_send(msg) {
            Ok(()) => {}
            Err(TrySendError::Full(m)) => {
                self.overrun.trip(m.tag().cloned());
                self.store.close_subscriber(self.id);
            }
            Err(TrySendError::Disconnected(_)) => {}
        }
    }

    /// Set once the outgoing buffer overflowed; the transport should send
    /// [`Session::overrun_nak`] and close.
    pub fn is_overrun(&self) -> bool {
        self.overrun.is_set()
    }

    pub fn overrun_nak(&self) -> Message {
        Message::Nak {
            tag: self.overrun.tag(),
            reason: NakReason::Overrun,
        }
    }

    pub fn recv(&self, timeout: Duration) -> Option<Message> {
        self.rx.lock().expect("session lock").recv_timeout(timeout).ok()
    }

    pub fn drain(&self) -> Vec<Message> {
        self.rx.lock().expect("session lock").try_iter().collect()
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.store.close_subscriber(self.id);
    }
}

fn nak(tag: super::TagName, reason: NakReason) -> Message {
    Message::Nak { tag: Some(tag), reason }
}

fn wire_line(msg: &Message) -> String {
    match encode(msg) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("dropping unencodable message: {e}");
            String::new()
        }
    }
}

/// Running listener; dropping it without [`ServerHandle::shutdown`] leaves
/// the threads running until the shared flag is raised.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Waits for the accept loop to exit (after the shared flag is raised).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

type ConnFn = fn(TcpStream, Arc<TagStore>, Arc<AtomicBool>);

fn spawn_listener(
    store: Arc<TagStore>,
    addr: impl ToSocketAddrs,
    shutdown: Arc<AtomicBool>,
    conn: ConnFn,
    label: &'static str,
) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    log::info!("{label} listening on {local}");
    let flag = shutdown.clone();
    let thread = thread::Builder::new().name(format!("{label}-accept")).spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::debug!("{label} client {peer}");
                    if stream.set_nonblocking(false).is_err() {
                        continue;
                    }
                    let (store, flag) = (store.clone(), flag.clone());
                    let _ = thread::Builder::new()
                        .name(format!("{label}-{peer}"))
                        .spawn(move || conn(stream, store, flag));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("{label} accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    })?;
    Ok(ServerHandle {
        addr: local,
        shutdown,
        thread: Some(thread),
    })
}

/// Serves the line protocol over TCP, one thread pair per connection.
pub fn spawn_tcp(store: Arc<TagStore>, addr: impl ToSocketAddrs, shutdown: Arc<AtomicBool>) -> io::Result<ServerHandle> {
    spawn_listener(store, addr, shutdown, tcp_connection, "tcp")
}

/// Serves the same protocol over WebSocket text frames, one message per
/// line.
pub fn spawn_ws(store: Arc<TagStore>, addr: impl ToSocketAddrs, shutdown: Arc<AtomicBool>) -> io::Result<ServerHandle> {
    spawn_listener(store, addr, shutdown, ws_connection, "ws")
}

fn tcp_connection(stream: TcpStream, store: Arc<TagStore>, shutdown: Arc<AtomicBool>) {
    let Ok(read_half) = stream.try_clone() else { return };
    let session = Arc::new(Session::open(store));
    let closed = Arc::new(AtomicBool::new(false));
    let reader = {
        let (session, closed) = (session.clone(), closed.clone());
        thread::spawn(move || {
            for line in BufReader::new(read_half).split(b'\n') {
                match line {
                    Ok(line) => session.handle_line(&line),
                    Err(_) => break,
                }
            }
            closed.store(true, Ordering::SeqCst);
        })
    };
    let mut out = io::BufWriter::new(&stream);
    while !shutdown.load(Ordering::SeqCst) && !closed.load(Ordering::SeqCst) {
        if session.is_overrun() {
            let _ = out.write_all(wire_line(&session.overrun_nak()).as_bytes());
            let _ = out.flush();
            break;
        }
        let Some(first) = session.recv(POLL) else { continue };
        let mut ok = out.write_all(wire_line(&first).as_bytes()).is_ok();
        for msg in session.drain() {
            ok = ok && out.write_all(wire_line(&msg).as_bytes()).is_ok();
        }
        if !ok || out.flush().is_err() {
            break;
        }
    }
    drop(out);
    let _ = stream.shutdown(std::net::Shutdown::Both);
    let _ = reader.join();
}

fn ws_connection(stream: TcpStream, store: Arc<TagStore>, shutdown: Arc<AtomicBool>) {
    use tungstenite::{Error, Message as Frame};

    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("ws handshake failed: {e}");
            return;
        }
    };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let session = Session::open(store);
    'conn: while !shutdown.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Frame::Text(text)) => {
                for line in text.as_str().split('\n').filter(|l| !l.is_empty()) {
                    session.handle_line(line.as_bytes());
                }
            }
            Ok(Frame::Binary(bytes)) => {
                for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
                    session.handle_line(line);
                }
            }
            Ok(Frame::Close(_)) => break,
            Ok(_) => {}
            Err(Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        if session.is_overrun() {
            let _ = ws.send(Frame::text(wire_line(&session.overrun_nak())));
            break;
        }
        for msg in session.drain() {
            if ws.send(Frame::text(wire_line(&msg))).is_err() {
                break 'conn;
            }
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}
