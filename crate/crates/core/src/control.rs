//! Control protocol: newline-delimited JSON over a local TCP socket.
//!
//! Client to server:
//! `{"t":"key_down","key":"1"}`, `{"t":"key_up","key":"1"}`,
//! `{"t":"admin_reset"}`, `{"t":"subscribe"}`.
//!
//! Server to client, on every observable change:
//! `{"t":"snapshot","tick":N,"lcd":["…","…"],"lock":true,"alarm":false,"mode":"IDLE","wrong":0}`
//! and `{"t":"error","msg":"…"}` for rejected requests.
//!
//! Any number of clients may observe. The first client to send a key or
//! reset becomes the driver until it disconnects; other clients get an error
//! if they try to drive. All connections feed one simulation thread through
//! an ordered channel; simulated time follows the wall clock at 1 ms/ms.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::controller::LogKind;
use crate::credential::{save_users, Database};
use crate::keypad::Key;
use crate::sim::{SimError, Simulator, Snapshot};

pub type ClientId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ClientMessage {
    KeyDown { key: String },
    KeyUp { key: String },
    AdminReset,
    Subscribe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Error { msg: String },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("server messages serialize");
        line.push('\n');
        line
    }

    fn error(msg: impl Into<String>) -> ServerMessage {
        ServerMessage::Error { msg: msg.into() }
    }
}

pub type Outbound = Vec<(ClientId, ServerMessage)>;

/// Transport-independent protocol state around one simulator.
#[derive(Debug)]
pub struct ControlSession {
    sim: Simulator,
    driver: Option<ClientId>,
    subscribers: BTreeSet<ClientId>,
    // index of the next trace record to broadcast
    sent: usize,
    audit_seen: usize,
    users_path: Option<PathBuf>,
}

impl ControlSession {
    pub fn new(sim: Simulator) -> ControlSession {
        let sent = sim.trace().len();
        let audit_seen = sim.audit().len();
        ControlSession {
            sim,
            driver: None,
            subscribers: BTreeSet::new(),
            sent,
            audit_seen,
            users_path: None,
        }
    }

    /// Saves the database here after every grant so used flags persist.
    pub fn persist_to(mut self, path: Option<PathBuf>) -> ControlSession {
        self.users_path = path;
        self
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn driver(&self) -> Option<ClientId> {
        self.driver
    }

    pub fn handle_line(&mut self, client: ClientId, line: &str) -> Result<Outbound, SimError> {
        let msg: ClientMessage = match serde_json::from_str(line) {
            Ok(msg) => msg,
            Err(err) => {
                return Ok(vec![(
                    client,
                    ServerMessage::error(format!("malformed message: {err}")),
                )])
            }
        };
        self.handle(client, msg)
    }

    pub fn handle(&mut self, client: ClientId, msg: ClientMessage) -> Result<Outbound, SimError> {
        let reject = |msg: String| Ok(vec![(client, ServerMessage::error(msg))]);
        match msg {
            ClientMessage::Subscribe => {
                self.subscribers.insert(client);
                Ok(vec![(client, ServerMessage::Snapshot(self.sim.snapshot()))])
            }
            driving => {
                if let Err(msg) = self.claim_driver(client) {
                    return reject(msg);
                }
                match driving {
                    ClientMessage::KeyDown { key } => match parse_key(&key) {
                        Some(k) => self.sim.press(k),
                        None => return reject(format!("unknown key {key:?}")),
                    },
                    ClientMessage::KeyUp { key } => match parse_key(&key) {
                        Some(k) => self.sim.release(k),
                        None => return reject(format!("unknown key {key:?}")),
                    },
                    ClientMessage::AdminReset => self.sim.admin_reset()?,
                    ClientMessage::Subscribe => unreachable!(),
                }
                Ok(self.flush())
            }
        }
    }

    fn claim_driver(&mut self, client: ClientId) -> Result<(), String> {
        match self.driver {
            Some(d) if d != client => Err(format!("client {d} is driving the panel")),
            _ => {
                self.driver = Some(client);
                Ok(())
            }
        }
    }

    /// Forgets a client. A departing driver releases every key it held.
    pub fn disconnect(&mut self, client: ClientId) {
        self.subscribers.remove(&client);
        if self.driver == Some(client) {
            self.driver = None;
            let held: Vec<_> = self.sim.closed().iter().collect();
            for sc in held {
                self.sim.release(crate::keypad::decode(sc));
            }
        }
    }

    pub fn advance_to(&mut self, tick: u64) -> Result<Outbound, SimError> {
        self.sim.advance_to(tick)?;
        Ok(self.flush())
    }

    /// Snapshot messages for every trace record not yet broadcast.
    fn flush(&mut self) -> Outbound {
        let mut out = Vec::new();
        let new_records = &self.sim.trace()[self.sent..];
        for record in new_records {
            for &client in &self.subscribers {
                out.push((client, ServerMessage::Snapshot(record.clone())));
            }
        }
        self.sent = self.sim.trace().len();
        let granted = self.sim.audit()[self.audit_seen..]
            .iter()
            .any(|e| e.kind == LogKind::Grant);
        self.audit_seen = self.sim.audit().len();
        if granted {
            if let Some(path) = &self.users_path {
                if let Err(err) = save_users(self.sim.database(), path) {
                    let msg = format!("saving users to {}: {err}", path.display());
                    for &client in &self.subscribers {
                        out.push((client, ServerMessage::error(msg.clone())));
                    }
                }
            }
        }
        out
    }
}

fn parse_key(symbol: &str) -> Option<Key> {
    let mut chars = symbol.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Key::from_symbol(c),
        _ => None,
    }
}

enum Incoming {
    Connected(ClientId, TcpStream),
    Line(ClientId, String),
    Closed(ClientId),
}

/// Handle to a running control server.
pub struct ControlServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    acceptor: JoinHandle<()>,
    simulation: JoinHandle<Result<Database, SimError>>,
}

impl ControlServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, disconnects every client and returns the final
    /// database.
    pub fn shutdown(self) -> Result<Database, SimError> {
        self.shutdown.store(true, Ordering::SeqCst);
        self.wait()
    }

    /// Blocks until the simulation thread exits.
    pub fn wait(self) -> Result<Database, SimError> {
        let result = self.simulation.join().expect("simulation thread panicked");
        self.shutdown.store(true, Ordering::SeqCst);
        self.acceptor.join().expect("acceptor thread panicked");
        result
    }
}

/// Binds `addr` and serves the control protocol until shut down.
pub fn serve_control(
    cfg: &Config,
    db: Database,
    addr: impl ToSocketAddrs,
) -> Result<ControlServer, SimError> {
    let sim = Simulator::new(cfg, db)?;
    let session = ControlSession::new(sim).persist_to(cfg.users_path.clone());
    let listener = TcpListener::bind(addr).map_err(SimError::Socket)?;
    let addr = listener.local_addr().map_err(SimError::Socket)?;
    listener.set_nonblocking(true).map_err(SimError::Socket)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let acceptor = {
        let shutdown = Arc::clone(&shutdown);
        thread::spawn(move || accept_loop(listener, tx, &shutdown))
    };
    let simulation = {
        let shutdown = Arc::clone(&shutdown);
        thread::spawn(move || simulation_loop(session, rx, &shutdown))
    };
    Ok(ControlServer {
        addr,
        shutdown,
        acceptor,
        simulation,
    })
}

fn accept_loop(listener: TcpListener, tx: mpsc::Sender<Incoming>, shutdown: &AtomicBool) {
    let mut next_id: ClientId = 0;
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                next_id += 1;
                let id = next_id;
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let Ok(writer) = stream.try_clone() else {
                    continue;
                };
                if tx.send(Incoming::Connected(id, writer)).is_err() {
                    return;
                }
                let tx = tx.clone();
                thread::spawn(move || {
                    for line in BufReader::new(stream).lines() {
                        let Ok(line) = line else { break };
                        if tx.send(Incoming::Line(id, line)).is_err() {
                            return;
                        }
                    }
                    let _ = tx.send(Incoming::Closed(id));
                });
            }
            Err(err) if err.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn simulation_loop(
    mut session: ControlSession,
    rx: mpsc::Receiver<Incoming>,
    shutdown: &AtomicBool,
) -> Result<Database, SimError> {
    let start = Instant::now();
    let mut writers: BTreeMap<ClientId, TcpStream> = BTreeMap::new();
    let result = loop {
        if shutdown.load(Ordering::SeqCst) {
            break Ok(());
        }
        let incoming = match rx.recv_timeout(Duration::from_millis(1)) {
            Ok(msg) => Some(msg),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => break Ok(()),
        };
        let now = start.elapsed().as_millis() as u64;
        let mut out = match session.advance_to(now) {
            Ok(out) => out,
            Err(err) => break Err(err),
        };
        match incoming {
            Some(Incoming::Connected(id, stream)) => {
                writers.insert(id, stream);
            }
            Some(Incoming::Line(id, line)) => match session.handle_line(id, &line) {
                Ok(replies) => out.extend(replies),
                Err(err) => break Err(err),
            },
            Some(Incoming::Closed(id)) => {
                writers.remove(&id);
                session.disconnect(id);
            }
            None => {}
        }
        for (client, msg) in out {
            let Some(stream) = writers.get_mut(&client) else {
                continue;
            };
            if stream.write_all(msg.to_line().as_bytes()).is_err() {
                writers.remove(&client);
                session.disconnect(client);
            }
        }
    };
    for stream in writers.values() {
        let _ = stream.shutdown(Shutdown::Both);
    }
    result.map(|()| session.sim.database().clone())
}
