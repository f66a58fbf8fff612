//! A full cluster running inside [`SimNetwork`]: Raft nodes with their
//! transports and key-value stores, closed-loop clients, scripted faults and
//! an optional safety checker.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::codec::encode_message;
use super::config::ClusterConfig;
use super::sim::{FaultAction, LinkParams, SimEvent, SimNetwork};
use super::transport::{NodeMetrics, Transport, TransportMode};
use crate::check::SafetyChecker;
use crate::kv::KvStore;
use crate::raft::{Effect, Event, LogEntry, Micros, NodeId, NodeState, RaftConfig, RaftMessage, Role, Term};
use crate::secure::{CachePolicy, Keyring, ManualClock, MasterKey, ReplayCache, KEY_LEN};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub members: Vec<NodeId>,
    pub mode: TransportMode,
    pub seed: u64,
    pub link: LinkParams,
    pub election_timeout_min: Micros,
    pub election_timeout_max: Micros,
    pub heartbeat_interval: Micros,
    pub cache_policy: CachePolicy,
    pub confidential: bool,
    /// Shared key; drawn from the seed when `None`.
    pub master_key: Option<MasterKey>,
    pub clients: usize,
    /// A client re-sends to the next node after this long without an answer.
    pub client_timeout: Micros,
    /// Pause before retrying after a not-leader answer.
    pub client_backoff: Micros,
    pub check_safety: bool,
}

impl SimConfig {
    /// `nodes` members with ids `1..=nodes` and one client.
    pub fn new(nodes: u64, mode: TransportMode, seed: u64) -> Self {
        SimConfig {
            members: (1..=nodes).map(NodeId).collect(),
            mode,
            seed,
            link: LinkParams::default(),
            election_timeout_min: RaftConfig::DEFAULT_ELECTION_MIN,
            election_timeout_max: RaftConfig::DEFAULT_ELECTION_MAX,
            heartbeat_interval: RaftConfig::DEFAULT_HEARTBEAT,
            cache_policy: CachePolicy::default(),
            confidential: true,
            master_key: None,
            clients: 1,
            client_timeout: 1_000_000,
            client_backoff: 20_000,
            check_safety: false,
        }
    }

    /// Mirrors a cluster file's membership, timing, keys and cache policy.
    pub fn from_cluster(config: &ClusterConfig, seed: u64) -> Self {
        SimConfig {
            members: config.members(),
            mode: config.transport_mode,
            election_timeout_min: config.election_timeout_min,
            election_timeout_max: config.election_timeout_max,
            heartbeat_interval: config.heartbeat_interval,
            cache_policy: config.cache_policy,
            confidential: config.confidential,
            master_key: config.active_key().cloned(),
            ..SimConfig::new(0, config.transport_mode, seed)
        }
    }
}

/// One committed client command as seen by the client that sent it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub client: NodeId,
    pub command: Vec<u8>,
    pub submitted: Micros,
    pub committed: Micros,
    pub index: u64,
}

impl Completion {
    pub fn latency(&self) -> Micros {
        self.committed - self.submitted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElectionRecord {
    pub time: Micros,
    pub node: NodeId,
    pub term: Term,
}

/// What happened to frames placed on the wire by an attacker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InjectionStats {
    /// Injected frames that reached a live endpoint.
    pub arrived: u64,
    /// Injected frames that passed the transport and became a protocol event.
    pub accepted: u64,
    pub rejected: BTreeMap<&'static str, u64>,
    /// Frames emitted by nodes while processing accepted injected frames.
    pub responses_triggered: u64,
}

impl InjectionStats {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }
}

#[derive(Debug)]
struct SimNode {
    state: NodeState,
    transport: Transport,
    kv: KvStore,
    up: bool,
    wake_at: Micros,
    wake_gen: u64,
    /// Log index → (client, term) for proposals awaiting commit.
    pending: BTreeMap<u64, (NodeId, Term)>,
    transport_seed: u64,
}

#[derive(Debug)]
struct InFlight {
    command: Vec<u8>,
    submitted: Micros,
    target: NodeId,
    backing_off: bool,
}

#[derive(Debug)]
struct SimClient {
    transport: Transport,
    queue: VecDeque<Vec<u8>>,
    in_flight: Option<InFlight>,
    target: usize,
    timer_gen: u64,
    completions: Vec<Completion>,
}

pub struct SimCluster {
    config: SimConfig,
    net: SimNetwork,
    nodes: BTreeMap<NodeId, SimNode>,
    clients: BTreeMap<NodeId, SimClient>,
    keyring: Keyring,
    active: MasterKey,
    clock: ManualClock,
    trace: Sha256,
    events: u64,
    elections: Vec<ElectionRecord>,
    injections: InjectionStats,
    legit_accepted: u64,
    legit_rejected: u64,
    submissions: BTreeMap<Vec<u8>, u64>,
    checker: Option<SafetyChecker>,
}

impl SimCluster {
    pub fn new(config: SimConfig) -> Self {
        // Every sub-seed is drawn in a fixed order regardless of mode so that
        // plaintext and secure runs of one seed share timers and link delays.
        let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
        let net_seed: u64 = seeder.gen();
        let mut secret = [0u8; KEY_LEN];
        seeder.fill(&mut secret);
        let active = config
            .master_key
            .clone()
            .unwrap_or_else(|| MasterKey::new(1, secret));
        let keyring: Keyring = [active.clone()].into_iter().collect();
        let clock = ManualClock::new(0);

        let mut cluster = SimCluster {
            net: SimNetwork::new(config.link, net_seed),
            nodes: BTreeMap::new(),
            clients: BTreeMap::new(),
            keyring,
            active,
            clock,
            trace: Sha256::new(),
            events: 0,
            elections: Vec::new(),
            injections: InjectionStats::default(),
            legit_accepted: 0,
            legit_rejected: 0,
            submissions: BTreeMap::new(),
            checker: config.check_safety.then(SafetyChecker::new),
            config,
        };

        for &id in &cluster.config.members.clone() {
            let timer_seed: u64 = seeder.gen();
            let transport_seed: u64 = seeder.gen();
            let raft = RaftConfig {
                id,
                members: cluster.config.members.clone(),
                election_timeout_min: cluster.config.election_timeout_min,
                election_timeout_max: cluster.config.election_timeout_max,
                heartbeat_interval: cluster.config.heartbeat_interval,
            };
            let state = NodeState::new(&raft, timer_seed, 0);
            let transport = cluster.make_transport(id, transport_seed);
            cluster.nodes.insert(
                id,
                SimNode {
                    state,
                    transport,
                    kv: KvStore::new(),
                    up: true,
                    wake_at: Micros::MAX,
                    wake_gen: 0,
                    pending: BTreeMap::new(),
                    transport_seed,
                },
            );
            cluster.reschedule(id);
        }
        for n in 0..cluster.config.clients {
            let id = NodeId::client(n as u64);
            let transport_seed: u64 = seeder.gen();
            let transport = cluster.make_transport(id, transport_seed);
            cluster.clients.insert(
                id,
                SimClient {
                    transport,
                    queue: VecDeque::new(),
                    in_flight: None,
                    target: n,
                    timer_gen: 0,
                    completions: Vec::new(),
                },
            );
        }
        cluster
    }

    fn make_transport(&self, id: NodeId, seed: u64) -> Transport {
        match self.config.mode {
            TransportMode::Plaintext => Transport::plaintext(id),
            TransportMode::Secure => Transport::secure(
                id,
                self.keyring.clone(),
                self.active.clone(),
                ReplayCache::with_clock(self.config.cache_policy, Arc::new(self.clock.clone())),
                Some(seed),
                self.config.confidential,
            ),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> Micros {
        self.net.now()
    }

    pub fn members(&self) -> &[NodeId] {
        &self.config.members
    }

    pub fn client_ids(&self) -> Vec<NodeId> {
        self.clients.keys().copied().collect()
    }

    pub fn network(&self) -> &SimNetwork {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut SimNetwork {
        &mut self.net
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[&id].state
    }

    pub fn is_up(&self, id: NodeId) -> bool {
        self.nodes[&id].up
    }

    pub fn kv(&self, id: NodeId) -> &KvStore {
        &self.nodes[&id].kv
    }

    pub fn metrics(&self, id: NodeId) -> &NodeMetrics {
        match self.nodes.get(&id) {
            Some(node) => node.transport.metrics(),
            None => self.clients[&id].transport.metrics(),
        }
    }

    pub fn replay_cache(&self, id: NodeId) -> Option<&ReplayCache> {
        self.nodes[&id].transport.replay_cache()
    }

    pub fn elections(&self) -> &[ElectionRecord] {
        &self.elections
    }

    pub fn injections(&self) -> &InjectionStats {
        &self.injections
    }

    /// Legitimate frames that passed their receiver's transport.
    pub fn legit_accepted(&self) -> u64 {
        self.legit_accepted
    }

    /// Legitimate frames refused by their receiver's transport.
    pub fn legit_rejected(&self) -> u64 {
        self.legit_rejected
    }

    /// How many times each command was sent by a client, retries included.
    pub fn submissions(&self) -> &BTreeMap<Vec<u8>, u64> {
        &self.submissions
    }

    pub fn checker(&self) -> Option<&SafetyChecker> {
        self.checker.as_ref()
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    /// SHA-256 over every event delivered so far, hex encoded.
    pub fn trace_hash(&self) -> String {
        hex::encode(self.trace.clone().finalize())
    }

    /// SHA-256 over a node's committed `(index, term, command)` sequence.
    pub fn committed_digest(&self, id: NodeId) -> String {
        committed_digest(self.node(id).committed())
    }

    /// Highest-term leader among running nodes.
    pub fn leader(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.up && n.state.role() == Role::Leader)
            .max_by_key(|(_, n)| n.state.current_term())
            .map(|(id, _)| *id)
    }

    pub fn completions(&self) -> Vec<Completion> {
        let mut all: Vec<Completion> = self
            .clients
            .values()
            .flat_map(|c| c.completions.iter().cloned())
            .collect();
        all.sort_by_key(|c| (c.committed, c.client));
        all
    }

    pub fn clients_idle(&self) -> bool {
        self.clients
            .values()
            .all(|c| c.in_flight.is_none() && c.queue.is_empty())
    }

    /// Queues commands on one client; it sends them one at a time.
    pub fn submit(&mut self, client: usize, commands: impl IntoIterator<Item = Vec<u8>>) {
        let id = NodeId::client(client as u64);
        let c = self.clients.get_mut(&id).expect("no such client");
        c.queue.extend(commands);
        if c.in_flight.is_none() {
            self.client_next(id);
        }
    }

    pub fn crash(&mut self, id: NodeId) {
        let node = self.nodes.get_mut(&id).expect("no such node");
        node.up = false;
        node.pending.clear();
        node.wake_gen += 1;
        node.wake_at = Micros::MAX;
    }

    /// Brings a crashed node back with its persistent state. The key-value
    /// store is rebuilt from the log as commits arrive; the replay cache,
    /// being in memory, starts empty.
    pub fn restart(&mut self, id: NodeId) {
        let now = self.net.now();
        let seed = self.nodes[&id].transport_seed.wrapping_add(now);
        let transport = self.make_transport(id, seed);
        let node = self.nodes.get_mut(&id).expect("no such node");
        if node.up {
            return;
        }
        node.state = node.state.clone().restart(now);
        node.transport = transport;
        node.kv = KvStore::new();
        node.up = true;
        if let Some(checker) = &mut self.checker {
            checker.on_restart(&node.state);
        }
        self.reschedule(id);
    }

    pub fn partition(&mut self, left: &[NodeId], right: &[NodeId]) {
        self.net.partition(left, right);
    }

    pub fn heal_all(&mut self) {
        self.net.heal_all();
    }

    pub fn schedule_fault(&mut self, at: Micros, fault: FaultAction) {
        self.net.schedule_fault(at, fault);
    }

    /// Puts attacker bytes on the `from → to` link, due `delay` from now.
    pub fn inject(&mut self, from: NodeId, to: NodeId, bytes: Vec<u8>, delay: Micros) {
        self.net.inject(from, to, bytes, delay);
    }

    /// Processes the next scheduled event. Returns false when nothing is
    /// scheduled.
    pub fn step(&mut self) -> bool {
        let Some((now, event)) = self.net.next_event() else {
            return false;
        };
        self.clock.set(now);
        match event {
            SimEvent::Frame {
                from,
                to,
                bytes,
                injected,
            } => self.deliver_frame(from, to, &bytes, injected),
            SimEvent::Timer { node, generation } => self.fire_timer(node, generation),
            SimEvent::Fault(fault) => self.apply_fault(fault),
        }
        true
    }

    /// Runs every event due at or before `t`, then sets the clock to `t`.
    pub fn run_until(&mut self, t: Micros) {
        while self.net.peek_time().is_some_and(|at| at <= t) {
            self.step();
        }
        self.net.advance_to(t);
        self.clock.set(self.net.now());
    }

    pub fn run_for(&mut self, d: Micros) {
        self.run_until(self.net.now() + d);
    }

    /// Runs until some node leads or `deadline` passes.
    pub fn run_until_leader(&mut self, deadline: Micros) -> Option<NodeId> {
        while self.leader().is_none() {
            match self.net.peek_time() {
                Some(t) if t <= deadline => {
                    self.step();
                }
                _ => {
                    self.run_until(deadline);
                    return None;
                }
            }
        }
        self.leader()
    }

    /// Runs until every client has drained its queue. Returns false if
    /// `deadline` passed first.
    pub fn run_until_idle(&mut self, deadline: Micros) -> bool {
        while !self.clients_idle() {
            match self.net.peek_time() {
                Some(t) if t <= deadline => {
                    self.step();
                }
                _ => {
                    self.run_until(deadline);
                    return false;
                }
            }
        }
        true
    }

    fn apply_fault(&mut self, fault: FaultAction) {
        self.trace.update(b"fault");
        self.trace.update(format!("{fault:?}").as_bytes());
        match fault {
            FaultAction::Crash(id) => self.crash(id),
            FaultAction::Restart(id) => self.restart(id),
            FaultAction::Partition(left, right) => self.partition(&left, &right),
            FaultAction::HealAll => self.heal_all(),
            FaultAction::SetDropProbability(p) => self.net.set_drop_probability(p),
        }
    }

    fn record_trace(&mut self, to: NodeId, from: NodeId, payload: &[u8]) {
        self.events += 1;
        self.trace.update(self.net.now().to_be_bytes());
        self.trace.update(to.0.to_be_bytes());
        self.trace.update(from.0.to_be_bytes());
        self.trace.update((payload.len() as u64).to_be_bytes());
        self.trace.update(payload);
    }

    fn deliver_frame(&mut self, from: NodeId, to: NodeId, bytes: &[u8], injected: bool) {
        let up = match (self.nodes.get(&to), self.clients.contains_key(&to)) {
            (Some(node), _) => node.up,
            (None, true) => true,
            (None, false) => false,
        };
        if !up {
            self.net.record_dropped(from, to);
            if injected {
                self.injections.arrived += 1;
                *self.injections.rejected.entry("endpoint_down").or_default() += 1;
            }
            return;
        }
        let transport = match self.nodes.get_mut(&to) {
            Some(node) => &mut node.transport,
            None => &mut self.clients.get_mut(&to).expect("checked above").transport,
        };
        let result = transport.inbound(from, bytes);
        if injected {
            self.injections.arrived += 1;
        }
        let msg = match result {
            Ok(msg) => msg,
            Err(rejection) => {
                self.net.record_rejected(from, to);
                if injected {
                    *self.injections.rejected.entry(rejection.label()).or_default() += 1;
                } else {
                    self.legit_rejected += 1;
                    self.record_trace(to, from, rejection.label().as_bytes());
                }
                return;
            }
        };
        self.net.record_delivered(from, to);
        if injected {
            self.injections.accepted += 1;
        } else {
            self.legit_accepted += 1;
        }
        self.record_trace(to, from, &encode_message(&msg));
        if self.nodes.contains_key(&to) {
            let origin = from.is_client().then_some(from);
            let sent = self.node_event(to, Event::Inbound { from, msg }, origin);
            if injected {
                self.injections.responses_triggered += sent;
            }
        } else {
            self.client_inbound(to, from, msg);
        }
    }

    fn fire_timer(&mut self, id: NodeId, generation: u64) {
        if let Some(node) = self.nodes.get(&id) {
            if !node.up || node.wake_gen != generation {
                return;
            }
            self.record_trace(id, id, b"tick");
            let now = self.net.now();
            self.node_event(id, Event::Tick { now }, None);
        } else if let Some(client) = self.clients.get_mut(&id) {
            if client.timer_gen != generation {
                return;
            }
            let Some(flight) = &mut client.in_flight else {
                return;
            };
            if !flight.backing_off {
                client.target += 1;
            }
            flight.backing_off = false;
            self.client_send(id);
        }
    }

    /// Feeds one event to a node (preceded by a clock tick when time has
    /// moved) and carries out its effects. Returns the number of frames sent.
    fn node_event(&mut self, id: NodeId, event: Event, origin: Option<NodeId>) -> u64 {
        let now = self.net.now();
        let node = self.nodes.get_mut(&id).expect("known node");
        let mut effects = Vec::new();
        if now > node.state.now() && !matches!(event, Event::Tick { .. }) {
            effects.extend(node.state.step(Event::Tick { now }));
        }
        effects.extend(node.state.step(event));
        if let Some(checker) = &mut self.checker {
            let all: Vec<&NodeState> = self.nodes.values().map(|n| &n.state).collect();
            checker.after_step(now, &self.nodes[&id].state, &effects, &all);
        }
        let sent = self.apply_effects(id, effects, origin);
        self.reschedule(id);
        sent
    }

    fn send_from_node(&mut self, id: NodeId, to: NodeId, msg: &RaftMessage) {
        let frame = self
            .nodes
            .get_mut(&id)
            .expect("known node")
            .transport
            .outbound(msg);
        self.net.send(id, to, frame);
    }

    fn apply_effects(&mut self, id: NodeId, effects: Vec<Effect>, origin: Option<NodeId>) -> u64 {
        let mut sent = 0;
        for effect in effects {
            match effect {
                Effect::Send { to, msg } => {
                    self.send_from_node(id, to, &msg);
                    sent += 1;
                }
                Effect::Broadcast { msg } => {
                    let peers = self.nodes[&id].state.peers().to_vec();
                    for peer in peers {
                        self.send_from_node(id, peer, &msg);
                        sent += 1;
                    }
                }
                Effect::Commit { entries } => {
                    for entry in entries {
                        let node = self.nodes.get_mut(&id).expect("known node");
                        node.kv.apply(&entry.command);
                        if let Some((client, term)) = node.pending.remove(&entry.index) {
                            let committed = term == entry.term;
                            let reply = RaftMessage::ClientResponse {
                                committed,
                                index: entry.index,
                            };
                            self.send_from_node(id, client, &reply);
                            sent += 1;
                        }
                    }
                }
                Effect::ResetElectionTimer { .. } => {}
                Effect::BecameLeader { term } => {
                    self.elections.push(ElectionRecord {
                        time: self.net.now(),
                        node: id,
                        term,
                    });
                }
                Effect::SteppedDown { .. } => {
                    self.nodes.get_mut(&id).expect("known node").pending.clear();
                }
                Effect::ProposalAccepted { index, term } => {
                    if let Some(client) = origin {
                        self.nodes
                            .get_mut(&id)
                            .expect("known node")
                            .pending
                            .insert(index, (client, term));
                    }
                }
                Effect::NotLeader { .. } => {
                    if let Some(client) = origin {
                        let reply = RaftMessage::ClientResponse {
                            committed: false,
                            index: 0,
                        };
                        self.send_from_node(id, client, &reply);
                        sent += 1;
                    }
                }
            }
        }
        sent
    }

    fn reschedule(&mut self, id: NodeId) {
        let node = self.nodes.get_mut(&id).expect("known node");
        if !node.up {
            return;
        }
        let wake = node.state.next_wakeup();
        if wake != node.wake_at {
            node.wake_at = wake;
            node.wake_gen += 1;
            if wake != Micros::MAX {
                self.net.schedule_timer(id, wake, node.wake_gen);
            }
        }
    }

    fn client_next(&mut self, id: NodeId) {
        let now = self.net.now();
        let client = self.clients.get_mut(&id).expect("known client");
        let Some(command) = client.queue.pop_front() else {
            return;
        };
        client.in_flight = Some(InFlight {
            command,
            submitted: now,
            target: NodeId(0),
            backing_off: false,
        });
        self.client_send(id);
    }

    fn client_send(&mut self, id: NodeId) {
        let now = self.net.now();
        let members = &self.config.members;
        let client = self.clients.get_mut(&id).expect("known client");
        let target = members[client.target % members.len()];
        let flight = client.in_flight.as_mut().expect("something to send");
        flight.target = target;
        let msg = RaftMessage::ClientCommand {
            command: flight.command.clone(),
        };
        *self.submissions.entry(flight.command.clone()).or_default() += 1;
        let frame = client.transport.outbound(&msg);
        client.timer_gen += 1;
        let generation = client.timer_gen;
        self.net.send(id, target, frame);
        self.net
            .schedule_timer(id, now + self.config.client_timeout, generation);
    }

    fn client_inbound(&mut self, id: NodeId, from: NodeId, msg: RaftMessage) {
        let RaftMessage::ClientResponse { committed, index } = msg else {
            return;
        };
        let now = self.net.now();
        let backoff = self.config.client_backoff;
        let client = self.clients.get_mut(&id).expect("known client");
        let Some(flight) = &mut client.in_flight else {
            return;
        };
        if flight.target != from || flight.backing_off {
            return;
        }
        client.timer_gen += 1;
        if committed {
            let flight = client.in_flight.take().expect("checked above");
            client.completions.push(Completion {
                client: id,
                command: flight.command,
                submitted: flight.submitted,
                committed: now,
                index,
            });
            self.client_next(id);
        } else {
            client.target += 1;
            flight.backing_off = true;
            let generation = client.timer_gen;
            self.net.schedule_timer(id, now + backoff, generation);
        }
    }
}

pub fn committed_digest(entries: &[LogEntry]) -> String {
    let mut h = Sha256::new();
    for entry in entries {
        h.update(entry.index.to_be_bytes());
        h.update(entry.term.0.to_be_bytes());
        h.update((entry.command.len() as u64).to_be_bytes());
        h.update(&entry.command);
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kv::KvCommand;

    fn set(i: usize) -> Vec<u8> {
        KvCommand::Set {
            key: format!("k{i}").into_bytes(),
            value: format!("v{i}").into_bytes(),
        }
        .encode()
    }

    fn happy(mode: TransportMode, seed: u64) -> SimCluster {
        let mut config = SimConfig::new(3, mode, seed);
        config.check_safety = true;
        let mut cluster = SimCluster::new(config);
        cluster.run_until_leader(5_000_000).expect("leader");
        cluster.submit(0, (0..10).map(set));
        assert!(cluster.run_until_idle(20_000_000));
        cluster.run_for(200_000);
        cluster
    }

    #[test]
    fn three_nodes_elect_and_commit() {
        for mode in [TransportMode::Plaintext, TransportMode::Secure] {
            let cluster = happy(mode, 3);
            let digests: Vec<String> = cluster
                .members()
                .iter()
                .map(|id| cluster.committed_digest(*id))
                .collect();
            assert!(digests.windows(2).all(|w| w[0] == w[1]));
            for id in cluster.members() {
                assert_eq!(cluster.kv(*id).get(b"k9"), Some(&b"v9"[..]));
                assert_eq!(cluster.node(*id).commit_index(), 10);
            }
            assert!(cluster.checker().unwrap().is_clean());
            let order: Vec<Vec<u8>> = cluster.completions().into_iter().map(|c| c.command).collect();
            assert_eq!(order, (0..10).map(set).collect::<Vec<_>>());
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let a = happy(TransportMode::Secure, 11);
        let b = happy(TransportMode::Secure, 11);
        assert_eq!(a.trace_hash(), b.trace_hash());
        assert_eq!(a.events_processed(), b.events_processed());
        let c = happy(TransportMode::Secure, 12);
        assert_ne!(a.trace_hash(), c.trace_hash());
    }

    #[test]
    fn links_conserve_frames() {
        let cluster = happy(TransportMode::Secure, 5);
        for stats in cluster.network().link_stats().values() {
            assert!(stats.conserved(), "{stats:?}");
        }
        assert_eq!(cluster.legit_rejected(), 0);
    }

    #[test]
    fn leader_crash_triggers_new_election() {
        let mut config = SimConfig::new(5, TransportMode::Plaintext, 8);
        config.check_safety = true;
        let mut cluster = SimCluster::new(config);
        let first = cluster.run_until_leader(5_000_000).unwrap();
        cluster.submit(0, (0..5).map(set));
        assert!(cluster.run_until_idle(10_000_000));
        cluster.crash(first);
        cluster.run_for(2_000_000);
        let second = cluster.leader().unwrap();
        assert_ne!(first, second);
        cluster.submit(0, (5..10).map(set));
        assert!(cluster.run_until_idle(30_000_000));
        cluster.restart(first);
        cluster.run_for(1_000_000);
        assert_eq!(cluster.kv(first).get(b"k9"), Some(&b"v9"[..]));
        assert!(cluster.checker().unwrap().is_clean());
    }

    #[test]
    fn minority_partition_cannot_commit() {
        let mut cluster = SimCluster::new(SimConfig::new(3, TransportMode::Plaintext, 2));
        let leader = cluster.run_until_leader(5_000_000).unwrap();
        let others: Vec<NodeId> = cluster.members().iter().copied().filter(|m| *m != leader).collect();
        cluster.partition(&[leader], &others);
        let before = cluster.node(leader).commit_index();
        cluster.submit(0, [set(1)]);
        cluster.run_for(100_000);
        assert_eq!(cluster.node(leader).commit_index(), before);
    }
}
