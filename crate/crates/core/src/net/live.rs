//! Raft over TCP.
//!
//! Each node dials every peer once and uses that connection for its own
//! outbound traffic; inbound traffic arrives on connections the peers
//! dialed. Every connection opens with a hello frame naming the dialer:
//!
//! ```text
//! kind (1: 0 = peer, 1 = client, 2 = metrics request) ‖ id (u64 BE)
//! ```
//!
//! Reader threads push frames onto one channel consumed by the node's event
//! loop, so the state machine sees one event at a time. A metrics request is
//! answered with a single frame of `name value` lines.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::config::{ClusterConfig, ConfigError};
use super::frame::{decode_frame, encode_frame, read_frame, write_frame};
use super::transport::{NodeMetrics, Transport, TransportMode};
use crate::kv::KvStore;
use crate::raft::{Effect, Event, Micros, NodeId, NodeState, RaftMessage, Role, Term};
use crate::secure::{ReplayCache, SystemClock};

pub const HELLO_PEER: u8 = 0;
pub const HELLO_CLIENT: u8 = 1;
pub const HELLO_METRICS: u8 = 2;

const CONNECT_TIMEOUT: Duration = Duration::from_millis(300);
const RECONNECT_BACKOFF: Duration = Duration::from_millis(100);
const LOOP_TICK: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum LiveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("cannot resolve address `{0}`")]
    Resolve(String),
    #[error("secure transport configured without an active key")]
    NoActiveKey,
    #[error("no node committed the command before the deadline")]
    Timeout,
    #[error("unexpected reply from node {0}")]
    BadReply(NodeId),
    #[error("{0}")]
    Setup(String),
}

pub fn hello_frame(kind: u8, id: NodeId) -> Vec<u8> {
    let mut payload = vec![kind];
    payload.extend_from_slice(&id.0.to_be_bytes());
    encode_frame(&payload).expect("hello is tiny")
}

fn read_hello(stream: &mut TcpStream) -> io::Result<(u8, NodeId)> {
    let frame = read_frame(stream)?.ok_or_else(|| io::Error::from(io::ErrorKind::UnexpectedEof))?;
    let payload = decode_frame(&frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if payload.len() != 9 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad hello"));
    }
    let id = u64::from_be_bytes(payload[1..9].try_into().unwrap());
    Ok((payload[0], NodeId(id)))
}

pub fn resolve(addr: &str) -> Result<SocketAddr, LiveError> {
    addr.to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| LiveError::Resolve(addr.to_string()))
}

/// Builds the transport an endpoint uses under `config`.
pub fn make_transport(config: &ClusterConfig, id: NodeId) -> Result<Transport, LiveError> {
    Ok(match config.transport_mode {
        TransportMode::Plaintext => Transport::plaintext(id),
        TransportMode::Secure => Transport::secure(
            id,
            config.keyring(),
            config.active_key().cloned().ok_or(LiveError::NoActiveKey)?,
            ReplayCache::with_clock(config.cache_policy, Arc::new(SystemClock::default())),
            None,
            config.confidential,
        ),
    })
}

enum Input {
    Frame { from: NodeId, bytes: Vec<u8> },
    Client { id: NodeId, stream: TcpStream },
    Metrics { stream: TcpStream },
}

/// Snapshot of a running node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStatus {
    pub role: Option<Role>,
    pub term: Term,
    pub commit_index: u64,
    pub leader: Option<NodeId>,
    pub metrics: NodeMetrics,
}

pub struct NodeHandle {
    id: NodeId,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    status: Arc<Mutex<NodeStatus>>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    threads: Vec<JoinHandle<()>>,
}

impl NodeHandle {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn status(&self) -> NodeStatus {
        self.status.lock().expect("status lock").clone()
    }

    /// Stops every thread and closes every connection.
    pub fn stop(mut self) -> NodeStatus {
        self.shutdown();
        self.status()
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for s in self.streams.lock().expect("streams lock").drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Starts node `id` on an already-bound listener.
pub fn spawn_node(config: &ClusterConfig, id: NodeId, listener: TcpListener) -> Result<NodeHandle, LiveError> {
    let raft = config.raft_config(id)?;
    let transport = make_transport(config, id)?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let status = Arc::new(Mutex::new(NodeStatus::default()));
    let streams: Arc<Mutex<Vec<TcpStream>>> = Arc::new(Mutex::new(Vec::new()));
    let (tx, rx) = mpsc::channel();
    let mut threads = Vec::new();

    let mut peers = BTreeMap::new();
    for peer in config.nodes.iter().filter(|n| n.id != id) {
        let (ptx, prx) = mpsc::channel::<Vec<u8>>();
        peers.insert(peer.id, ptx);
        let target = peer.addr.clone();
        let stop = stop.clone();
        let streams = streams.clone();
        threads.push(thread::spawn(move || peer_writer(id, target, prx, stop, streams)));
    }

    {
        let stop = stop.clone();
        let streams = streams.clone();
        threads.push(thread::spawn(move || accept_loop(listener, tx, stop, streams)));
    }

    let tap = match &config.tap_file {
        Some(path) => Some(BufWriter::new(
            OpenOptions::new().create(true).append(true).open(path)?,
        )),
        None => None,
    };
    let seed = config.rng_seed ^ id.0.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ rand::random::<u64>();
    let node = LiveNode {
        state: NodeState::new(&raft, seed, 0),
        transport,
        peers,
        clients: HashMap::new(),
        pending: BTreeMap::new(),
        kv: KvStore::new(),
        origin: Instant::now(),
        tap,
    };
    {
        let stop = stop.clone();
        let status = status.clone();
        threads.push(thread::spawn(move || node.run(rx, stop, status)));
    }
    Ok(NodeHandle {
        id,
        addr,
        stop,
        status,
        streams,
        threads,
    })
}

/// Binds the configured address for `id` and serves until the process ends.
pub fn run_node(config: &ClusterConfig, id: NodeId) -> Result<(), LiveError> {
    let addr = config.address_of(id).ok_or(ConfigError::UnknownNode(id))?;
    let listener = TcpListener::bind(resolve(addr)?)?;
    let handle = spawn_node(config, id, listener)?;
    eprintln!("node {id} listening on {} ({})", handle.addr(), config.transport_mode);
    loop {
        thread::sleep(Duration::from_secs(3600));
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Input>, stop: Arc<AtomicBool>, streams: Arc<Mutex<Vec<TcpStream>>>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                if let Ok(clone) = stream.try_clone() {
                    streams.lock().expect("streams lock").push(clone);
                }
                let tx = tx.clone();
                thread::spawn(move || connection_reader(stream, tx));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn connection_reader(mut stream: TcpStream, tx: Sender<Input>) {
    let Ok((kind, id)) = read_hello(&mut stream) else {
        return;
    };
    match kind {
        HELLO_METRICS => {
            let _ = tx.send(Input::Metrics { stream });
            return;
        }
        HELLO_CLIENT => {
            let Ok(writer) = stream.try_clone() else {
                return;
            };
            if tx.send(Input::Client { id, stream: writer }).is_err() {
                return;
            }
        }
        HELLO_PEER => {}
        _ => return,
    }
    // A framing error ends the loop and drops the connection.
    while let Ok(Some(bytes)) = read_frame(&mut stream) {
        if tx.send(Input::Frame { from: id, bytes }).is_err() {
            return;
        }
    }
}

fn peer_writer(
    me: NodeId,
    addr: String,
    rx: Receiver<Vec<u8>>,
    stop: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
) {
    let mut conn: Option<TcpStream> = None;
    let mut next_attempt = Instant::now();
    loop {
        let frame = match rx.recv_timeout(LOOP_TICK) {
            Ok(frame) => frame,
            Err(RecvTimeoutError::Timeout) => {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => return,
        };
        if conn.is_none() && Instant::now() >= next_attempt {
            conn = dial(&addr, HELLO_PEER, me).ok();
            match &conn {
                Some(s) => {
                    if let Ok(clone) = s.try_clone() {
                        streams.lock().expect("streams lock").push(clone);
                    }
                }
                None => next_attempt = Instant::now() + RECONNECT_BACKOFF,
            }
        }
        // Without a connection the frame is lost, as on a lossy network.
        if let Some(stream) = &mut conn {
            if write_frame(stream, &frame).is_err() {
                conn = None;
            }
        }
    }
}

/// Connects to `addr` and introduces the caller.
pub fn dial(addr: &str, kind: u8, id: NodeId) -> Result<TcpStream, LiveError> {
    let mut stream = TcpStream::connect_timeout(&resolve(addr)?, CONNECT_TIMEOUT)?;
    stream.set_nodelay(true)?;
    write_frame(&mut stream, &hello_frame(kind, id))?;
    Ok(stream)
}

struct LiveNode {
    state: NodeState,
    transport: Transport,
    peers: BTreeMap<NodeId, Sender<Vec<u8>>>,
    clients: HashMap<NodeId, TcpStream>,
    pending: BTreeMap<u64, (NodeId, Term)>,
    kv: KvStore,
    origin: Instant,
    tap: Option<BufWriter<File>>,
}

impl LiveNode {
    fn now(&self) -> Micros {
        self.origin.elapsed().as_micros() as Micros
    }

    fn run(mut self, rx: Receiver<Input>, stop: Arc<AtomicBool>, status: Arc<Mutex<NodeStatus>>) {
        while !stop.load(Ordering::SeqCst) {
            let wait = self.state.next_wakeup().saturating_sub(self.now());
            let wait = Duration::from_micros(wait).min(LOOP_TICK);
            match rx.recv_timeout(wait) {
                Ok(Input::Frame { from, bytes }) => self.on_frame(from, &bytes),
                Ok(Input::Client { id, stream }) => {
                    self.clients.insert(id, stream);
                }
                Ok(Input::Metrics { mut stream }) => {
                    if let Ok(frame) = encode_frame(self.transport.metrics().render().as_bytes()) {
                        let _ = write_frame(&mut stream, &frame);
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            let now = self.now();
            if now >= self.state.next_wakeup() {
                let effects = self.state.step(Event::Tick { now });
                self.apply(effects, None);
            }
            let mut s = status.lock().expect("status lock");
            s.role = Some(self.state.role());
            s.term = self.state.current_term();
            s.commit_index = self.state.commit_index();
            s.leader = self.state.leader_id();
            s.metrics = self.transport.metrics().clone();
        }
        if let Some(tap) = &mut self.tap {
            let _ = tap.flush();
        }
    }

    fn on_frame(&mut self, from: NodeId, bytes: &[u8]) {
        if let Some(tap) = &mut self.tap {
            let _ = writeln!(tap, "{} {} {}", from, self.state.id(), hex::encode(bytes));
            let _ = tap.flush();
        }
        let Ok(msg) = self.transport.inbound(from, bytes) else {
            return;
        };
        let now = self.now();
        let mut effects = self.state.step(Event::Tick { now });
        effects.extend(self.state.step(Event::Inbound { from, msg }));
        self.apply(effects, from.is_client().then_some(from));
    }

    fn send(&mut self, to: NodeId, msg: &RaftMessage) {
        let frame = self.transport.outbound(msg);
        if let Some(peer) = self.peers.get(&to) {
            let _ = peer.send(frame);
        } else if let Some(stream) = self.clients.get_mut(&to) {
            if write_frame(stream, &frame).is_err() {
                self.clients.remove(&to);
            }
        }
    }

    fn apply(&mut self, effects: Vec<Effect>, origin: Option<NodeId>) {
        for effect in effects {
            match effect {
                Effect::Send { to, msg } => self.send(to, &msg),
                Effect::Broadcast { msg } => {
                    let peers: Vec<NodeId> = self.peers.keys().copied().collect();
                    for peer in peers {
                        self.send(peer, &msg);
                    }
                }
                Effect::Commit { entries } => {
                    for entry in entries {
                        self.kv.apply(&entry.command);
                        if let Some((client, term)) = self.pending.remove(&entry.index) {
                            let reply = RaftMessage::ClientResponse {
                                committed: term == entry.term,
                                index: entry.index,
                            };
                            self.send(client, &reply);
                        }
                    }
                }
                Effect::ProposalAccepted { index, term } => {
                    if let Some(client) = origin {
                        self.pending.insert(index, (client, term));
                    }
                }
                Effect::NotLeader { .. } => {
                    if let Some(client) = origin {
                        let reply = RaftMessage::ClientResponse {
                            committed: false,
                            index: 0,
                        };
                        self.send(client, &reply);
                    }
                }
                Effect::SteppedDown { .. } => self.pending.clear(),
                Effect::ResetElectionTimer { .. } | Effect::BecameLeader { .. } => {}
            }
        }
    }
}

/// Synchronous client that follows the leader by trial.
pub struct LiveClient {
    id: NodeId,
    transport: Transport,
    nodes: Vec<(NodeId, String)>,
    target: usize,
    conn: Option<(NodeId, TcpStream)>,
    pub reply_timeout: Duration,
}

impl LiveClient {
    pub fn new(config: &ClusterConfig, id: NodeId) -> Result<Self, LiveError> {
        Ok(LiveClient {
            id,
            transport: make_transport(config, id)?,
            nodes: config.nodes.iter().map(|n| (n.id, n.addr.clone())).collect(),
            target: id.0 as usize,
            conn: None,
            reply_timeout: Duration::from_secs(1),
        })
    }

    fn connection(&mut self) -> Result<&mut (NodeId, TcpStream), LiveError> {
        if self.conn.is_none() {
            let (node, addr) = self.nodes[self.target % self.nodes.len()].clone();
            let stream = dial(&addr, HELLO_CLIENT, self.id)?;
            stream.set_read_timeout(Some(self.reply_timeout))?;
            self.conn = Some((node, stream));
        }
        Ok(self.conn.as_mut().expect("just connected"))
    }

    fn rotate(&mut self) {
        self.conn = None;
        self.target += 1;
    }

    fn attempt(&mut self, command: &[u8]) -> Result<Option<u64>, LiveError> {
        let frame = self.transport.outbound(&RaftMessage::ClientCommand {
            command: command.to_vec(),
        });
        let (node, stream) = self.connection()?;
        let node = *node;
        write_frame(stream, &frame)?;
        let reply = read_frame(stream)?.ok_or(LiveError::BadReply(node))?;
        match self.transport.inbound(node, &reply) {
            Ok(RaftMessage::ClientResponse { committed: true, index }) => Ok(Some(index)),
            Ok(RaftMessage::ClientResponse { committed: false, .. }) => Ok(None),
            _ => Err(LiveError::BadReply(node)),
        }
    }

    /// Sends `command` until some node reports it committed.
    pub fn submit(&mut self, command: &[u8], deadline: Duration) -> Result<u64, LiveError> {
        let give_up = Instant::now() + deadline;
        while Instant::now() < give_up {
            match self.attempt(command) {
                Ok(Some(index)) => return Ok(index),
                Ok(None) => {
                    self.rotate();
                    thread::sleep(Duration::from_millis(5));
                }
                Err(_) => {
                    self.rotate();
                    thread::sleep(Duration::from_millis(20));
                }
            }
        }
        Err(LiveError::Timeout)
    }
}

/// Asks a node for its transport counters.
pub fn query_metrics(addr: &str) -> Result<String, LiveError> {
    let mut stream = dial(addr, HELLO_METRICS, NodeId(0))?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let frame = read_frame(&mut stream)?.ok_or(LiveError::BadReply(NodeId(0)))?;
    let payload = decode_frame(&frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    Ok(String::from_utf8_lossy(payload).into_owned())
}

/// Reads a tap file written by a live node: `from to hex-frame` per line.
pub fn read_tap_file(path: &std::path::Path) -> Result<Vec<(NodeId, NodeId, Vec<u8>)>, LiveError> {
    let text = std::fs::read_to_string(path)?;
    let mut frames = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        let (Some(from), Some(to), Some(bytes)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let (Ok(from), Ok(to), Ok(bytes)) = (from.parse(), to.parse(), hex::decode(bytes)) else {
            continue;
        };
        frames.push((NodeId(from), NodeId(to), bytes));
    }
    Ok(frames)
}

/// Sends raw frames to `addr` on one connection that claims to be `as_peer`.
pub fn inject_frames(addr: &str, as_peer: NodeId, frames: &[Vec<u8>]) -> Result<(), LiveError> {
    let mut stream = dial(addr, HELLO_PEER, as_peer)?;
    for frame in frames {
        write_frame(&mut stream, frame)?;
    }
    stream.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::NodeAddress;
    use crate::secure::MasterKey;

    fn local_cluster(mode: TransportMode) -> (ClusterConfig, Vec<TcpListener>) {
        let listeners: Vec<TcpListener> = (0..3).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
        let nodes = listeners
            .iter()
            .enumerate()
            .map(|(i, l)| NodeAddress {
                id: NodeId(i as u64 + 1),
                addr: l.local_addr().unwrap().to_string(),
            })
            .collect();
        let mut config = ClusterConfig::new(nodes, mode);
        config.master_keys = vec![MasterKey::new(1, [9; 32])];
        config.active_key_id = Some(1);
        (config, listeners)
    }

    #[test]
    fn hello_layout() {
        assert_eq!(
            hello_frame(HELLO_CLIENT, NodeId(258)),
            vec![0, 0, 0, 9, 1, 0, 0, 0, 0, 0, 0, 1, 2]
        );
    }

    #[test]
    fn three_live_nodes_commit_client_writes() {
        for mode in [TransportMode::Plaintext, TransportMode::Secure] {
            let (config, listeners) = local_cluster(mode);
            let handles: Vec<NodeHandle> = listeners
                .into_iter()
                .enumerate()
                .map(|(i, l)| spawn_node(&config, NodeId(i as u64 + 1), l).unwrap())
                .collect();
            let mut client = LiveClient::new(&config, NodeId::client(0)).unwrap();
            for i in 0..5u8 {
                let index = client.submit(&[1, 0, 0, 0, 1, b'k', 0, 0, 0, 1, i], Duration::from_secs(10)).unwrap();
                assert!(index >= 1);
            }
            let metrics = query_metrics(&handles[0].addr().to_string()).unwrap();
            assert!(metrics.contains("frames_received "));
            let statuses: Vec<NodeStatus> = handles.into_iter().map(|h| h.stop()).collect();
            assert_eq!(statuses.iter().filter(|s| s.role == Some(Role::Leader)).count(), 1);
            assert!(statuses.iter().all(|s| s.metrics.rejected() == 0));
        }
    }
}
