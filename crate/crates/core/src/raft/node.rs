use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracing::debug;

use super::types::{Effect, Event, LogEntry, Micros, NodeId, RaftConfig, RaftMessage, Role, Term};

/// Per-peer replication progress, kept only while leading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaderVolatile {
    pub next_index: BTreeMap<NodeId, u64>,
    pub match_index: BTreeMap<NodeId, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum RoleState {
    Follower,
    Candidate { votes: BTreeSet<NodeId> },
    Leader(LeaderVolatile),
}

/// Source of election timeouts. The harness seeds it; the node only draws
/// from it, so a state value plus an event fully determines the output.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ElectionTimer {
    rng: ChaCha8Rng,
    min: Micros,
    max: Micros,
}

impl ElectionTimer {
    fn draw(&mut self) -> Micros {
        self.rng.gen_range(self.min..=self.max)
    }
}

/// Complete state of one Raft participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    id: NodeId,
    peers: Vec<NodeId>,
    role: RoleState,
    current_term: Term,
    voted_for: Option<NodeId>,
    log: Vec<LogEntry>,
    commit_index: u64,
    last_applied: u64,
    leader_id: Option<NodeId>,
    now: Micros,
    election_deadline: Micros,
    heartbeat_due: Micros,
    heartbeat_interval: Micros,
    timer: ElectionTimer,
}

impl NodeState {
    /// Fresh follower at term 0. `timeout_seed` feeds the election timer.
    pub fn new(config: &RaftConfig, timeout_seed: u64, now: Micros) -> Self {
        assert!(
            config.election_timeout_min <= config.election_timeout_max,
            "election timeout bounds inverted"
        );
        let peers = config
            .members
            .iter()
            .copied()
            .filter(|m| *m != config.id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut timer = ElectionTimer {
            rng: ChaCha8Rng::seed_from_u64(timeout_seed),
            min: config.election_timeout_min,
            max: config.election_timeout_max,
        };
        let election_deadline = now + timer.draw();
        NodeState {
            id: config.id,
            peers,
            role: RoleState::Follower,
            current_term: Term(0),
            voted_for: None,
            log: Vec::new(),
            commit_index: 0,
            last_applied: 0,
            leader_id: None,
            now,
            election_deadline,
            heartbeat_due: Micros::MAX,
            heartbeat_interval: config.heartbeat_interval,
            timer,
        }
    }

    /// Crash-restart: persistent state (term, vote, log) survives, everything
    /// volatile is reset and the node comes back as a follower.
    pub fn restart(mut self, now: Micros) -> Self {
        self.role = RoleState::Follower;
        self.commit_index = 0;
        self.last_applied = 0;
        self.leader_id = None;
        self.now = self.now.max(now);
        self.election_deadline = self.now + self.timer.draw();
        self.heartbeat_due = Micros::MAX;
        self
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn peers(&self) -> &[NodeId] {
        &self.peers
    }

    pub fn role(&self) -> Role {
        match self.role {
            RoleState::Follower => Role::Follower,
            RoleState::Candidate { .. } => Role::Candidate,
            RoleState::Leader(_) => Role::Leader,
        }
    }

    pub fn current_term(&self) -> Term {
        self.current_term
    }

    pub fn voted_for(&self) -> Option<NodeId> {
        self.voted_for
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }

    pub fn last_applied(&self) -> u64 {
        self.last_applied
    }

    pub fn leader_id(&self) -> Option<NodeId> {
        self.leader_id
    }

    /// Latest instant this node has observed.
    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn election_deadline(&self) -> Micros {
        self.election_deadline
    }

    pub fn votes_received(&self) -> Option<&BTreeSet<NodeId>> {
        match &self.role {
            RoleState::Candidate { votes } => Some(votes),
            _ => None,
        }
    }

    pub fn leader_volatile(&self) -> Option<&LeaderVolatile> {
        match &self.role {
            RoleState::Leader(volatile) => Some(volatile),
            _ => None,
        }
    }

    /// Committed prefix of the log.
    pub fn committed(&self) -> &[LogEntry] {
        &self.log[..self.commit_index as usize]
    }

    /// Earliest instant at which a `Tick` would change anything.
    pub fn next_wakeup(&self) -> Micros {
        match self.role {
            RoleState::Leader(_) => self.heartbeat_due,
            _ => self.election_deadline,
        }
    }

    pub fn last_log_index(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn last_log_term(&self) -> Term {
        self.log.last().map(|e| e.term).unwrap_or_default()
    }

    fn term_at(&self, index: u64) -> Option<Term> {
        if index == 0 {
            Some(Term(0))
        } else {
            self.log.get(index as usize - 1).map(|e| e.term)
        }
    }

    fn cluster_size(&self) -> usize {
        self.peers.len() + 1
    }

    fn majority(&self) -> usize {
        self.cluster_size() / 2 + 1
    }

    /// Processes one event. Pure: no I/O, no clock reads.
    pub fn step(&mut self, event: Event) -> Vec<Effect> {
        let mut effects = Vec::new();
        match event {
            Event::Tick { now } => self.on_tick(now, &mut effects),
            Event::ClientSubmit { command } => self.client_propose(command, &mut effects),
            Event::Inbound { from, msg } => self.on_message(from, msg, &mut effects),
        }
        effects
    }

    fn on_tick(&mut self, now: Micros, effects: &mut Vec<Effect>) {
        self.now = self.now.max(now);
        match self.role {
            RoleState::Leader(_) => {
                if self.now >= self.heartbeat_due {
                    self.replicate_to_all(effects);
                    self.heartbeat_due = self.now + self.heartbeat_interval;
                }
            }
            _ => {
                if self.now >= self.election_deadline {
                    self.start_election(effects);
                }
            }
        }
    }

    fn on_message(&mut self, from: NodeId, msg: RaftMessage, effects: &mut Vec<Effect>) {
        match msg {
            RaftMessage::RequestVote {
                term,
                candidate_id,
                last_log_index,
                last_log_term,
            } => self.handle_request_vote(
                from,
                term,
                candidate_id,
                last_log_index,
                last_log_term,
                effects,
            ),
            RaftMessage::RequestVoteResponse { term, vote_granted } => {
                self.handle_vote_response(from, term, vote_granted, effects)
            }
            RaftMessage::AppendEntries {
                term,
                leader_id,
                prev_log_index,
                prev_log_term,
                entries,
                leader_commit,
            } => self.handle_append_entries(
                from,
                term,
                leader_id,
                prev_log_index,
                prev_log_term,
                entries,
                leader_commit,
                effects,
            ),
            RaftMessage::AppendEntriesResponse {
                term,
                success,
                match_index,
            } => self.handle_append_entries_response(from, term, success, match_index, effects),
            RaftMessage::ClientCommand { command } => self.client_propose(command, effects),
            RaftMessage::ClientResponse { .. } => {
                debug!(node = %self.id, %from, "ignoring client response addressed to a node");
            }
        }
    }

    fn reset_election_timer(&mut self, effects: &mut Vec<Effect>) {
        self.election_deadline = self.now + self.timer.draw();
        effects.push(Effect::ResetElectionTimer {
            deadline: self.election_deadline,
        });
    }

    /// Adopts a higher term, reverting to follower.
    fn observe_term(&mut self, term: Term, effects: &mut Vec<Effect>) {
        if term <= self.current_term {
            return;
        }
        let was_leader = matches!(self.role, RoleState::Leader(_));
        self.current_term = term;
        self.voted_for = None;
        self.leader_id = None;
        self.role = RoleState::Follower;
        self.heartbeat_due = Micros::MAX;
        if was_leader {
            effects.push(Effect::SteppedDown { term });
            self.reset_election_timer(effects);
        }
    }

    fn start_election(&mut self, effects: &mut Vec<Effect>) {
        self.current_term = Term(self.current_term.0 + 1);
        self.voted_for = Some(self.id);
        self.leader_id = None;
        self.role = RoleState::Candidate {
            votes: BTreeSet::from([self.id]),
        };
        self.reset_election_timer(effects);
        debug!(node = %self.id, term = %self.current_term, "starting election");
        if !self.peers.is_empty() {
            effects.push(Effect::Broadcast {
                msg: RaftMessage::RequestVote {
                    term: self.current_term,
                    candidate_id: self.id,
                    last_log_index: self.last_log_index(),
                    last_log_term: self.last_log_term(),
                },
            });
        }
        if self.majority() <= 1 {
            self.become_leader(effects);
        }
    }

    fn become_leader(&mut self, effects: &mut Vec<Effect>) {
        let next = self.last_log_index() + 1;
        self.role = RoleState::Leader(LeaderVolatile {
            next_index: self.peers.iter().map(|p| (*p, next)).collect(),
            match_index: self.peers.iter().map(|p| (*p, 0)).collect(),
        });
        self.leader_id = Some(self.id);
        effects.push(Effect::BecameLeader {
            term: self.current_term,
        });
        self.replicate_to_all(effects);
        self.heartbeat_due = self.now + self.heartbeat_interval;
        self.advance_commit(effects);
    }

    fn append_entries_for(&self, peer: NodeId) -> Option<RaftMessage> {
        let RoleState::Leader(volatile) = &self.role else {
            return None;
        };
        let next = *volatile.next_index.get(&peer)?;
        let prev_log_index = next - 1;
        let prev_log_term = self.term_at(prev_log_index)?;
        Some(RaftMessage::AppendEntries {
            term: self.current_term,
            leader_id: self.id,
            prev_log_index,
            prev_log_term,
            entries: self.log[prev_log_index as usize..].to_vec(),
            leader_commit: self.commit_index,
        })
    }

    fn replicate_to_all(&self, effects: &mut Vec<Effect>) {
        for peer in &self.peers {
            if let Some(msg) = self.append_entries_for(*peer) {
                effects.push(Effect::Send { to: *peer, msg });
            }
        }
    }

    fn handle_request_vote(
        &mut self,
        from: NodeId,
        term: Term,
        candidate_id: NodeId,
        last_log_index: u64,
        last_log_term: Term,
        effects: &mut Vec<Effect>,
    ) {
        self.observe_term(term, effects);
        let up_to_date = (last_log_term, last_log_index) >= (self.last_log_term(), self.last_log_index());
        let free_to_vote = self.voted_for.is_none() || self.voted_for == Some(candidate_id);
        let grant = term == self.current_term && free_to_vote && up_to_date;
        if grant {
            self.voted_for = Some(candidate_id);
            self.reset_election_timer(effects);
        }
        effects.push(Effect::Send {
            to: from,
            msg: RaftMessage::RequestVoteResponse {
                term: self.current_term,
                vote_granted: grant,
            },
        });
    }

    fn handle_vote_response(
        &mut self,
        from: NodeId,
        term: Term,
        vote_granted: bool,
        effects: &mut Vec<Effect>,
    ) {
        self.observe_term(term, effects);
        if term != self.current_term || !self.peers.contains(&from) {
            return;
        }
        let majority = self.majority();
        let RoleState::Candidate { votes } = &mut self.role else {
            debug!(node = %self.id, %from, "vote response outside candidacy ignored");
            return;
        };
        if vote_granted {
            votes.insert(from);
            if votes.len() >= majority {
                self.become_leader(effects);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn handle_append_entries(
        &mut self,
        from: NodeId,
        term: Term,
        leader_id: NodeId,
        prev_log_index: u64,
        prev_log_term: Term,
        entries: Vec<LogEntry>,
        leader_commit: u64,
        effects: &mut Vec<Effect>,
    ) {
        let reject = |node: &NodeState, match_index: u64, effects: &mut Vec<Effect>| {
            effects.push(Effect::Send {
                to: from,
                msg: RaftMessage::AppendEntriesResponse {
                    term: node.current_term,
                    success: false,
                    match_index,
                },
            });
        };
        if term < self.current_term {
            reject(self, self.last_log_index(), effects);
            return;
        }
        self.observe_term(term, effects);
        if matches!(self.role, RoleState::Leader(_)) {
            // A second leader in our own term cannot exist; treat as malformed.
            debug!(node = %self.id, %from, "append entries for own leader term ignored");
            reject(self, self.last_log_index(), effects);
            return;
        }
        self.role = RoleState::Follower;
        self.leader_id = Some(leader_id);
        self.reset_election_timer(effects);

        match self.term_at(prev_log_index) {
            Some(t) if t == prev_log_term => {}
            Some(_) => {
                reject(self, prev_log_index.saturating_sub(1), effects);
                return;
            }
            None => {
                reject(self, self.last_log_index(), effects);
                return;
            }
        }
        let consecutive = entries
            .iter()
            .enumerate()
            .all(|(i, e)| e.index == prev_log_index + 1 + i as u64);
        let mut floor = prev_log_term;
        let ordered_terms = entries.iter().all(|e| {
            let ok = e.term >= floor && e.term <= term;
            floor = e.term;
            ok
        });
        if !consecutive || !ordered_terms {
            debug!(node = %self.id, %from, "malformed append entries batch");
            reject(self, self.last_log_index(), effects);
            return;
        }
        for entry in &entries {
            match self.term_at(entry.index) {
                Some(t) if t == entry.term => continue,
                Some(_) => {
                    if entry.index <= self.commit_index {
                        debug!(node = %self.id, index = entry.index, "refusing to overwrite committed entry");
                        reject(self, self.commit_index, effects);
                        return;
                    }
                    self.log.truncate(entry.index as usize - 1);
                    self.log.push(entry.clone());
                }
                None => self.log.push(entry.clone()),
            }
        }
        let last_new = prev_log_index + entries.len() as u64;
        if leader_commit > self.commit_index {
            let target = leader_commit.min(last_new);
            if target > self.commit_index {
                self.commit_index = target;
                self.apply(effects);
            }
        }
        effects.push(Effect::Send {
            to: from,
            msg: RaftMessage::AppendEntriesResponse {
                term: self.current_term,
                success: true,
                match_index: last_new,
            },
        });
    }

    fn handle_append_entries_response(
        &mut self,
        from: NodeId,
        term: Term,
        success: bool,
        match_index: u64,
        effects: &mut Vec<Effect>,
    ) {
        self.observe_term(term, effects);
        if term != self.current_term {
            return;
        }
        let last = self.last_log_index();
        let RoleState::Leader(volatile) = &mut self.role else {
            debug!(node = %self.id, %from, "append response while not leading ignored");
            return;
        };
        let (Some(next), Some(matched)) = (
            volatile.next_index.get(&from).copied(),
            volatile.match_index.get(&from).copied(),
        ) else {
            debug!(node = %self.id, %from, "append response from unknown peer ignored");
            return;
        };
        if success {
            let new_match = matched.max(match_index.min(last));
            volatile.match_index.insert(from, new_match);
            volatile.next_index.insert(from, next.max(new_match + 1));
            self.advance_commit(effects);
        } else {
            let lowered = next.saturating_sub(1).min(match_index.saturating_add(1)).max(1);
            volatile.next_index.insert(from, lowered.max(matched + 1));
            if let Some(msg) = self.append_entries_for(from) {
                effects.push(Effect::Send { to: from, msg });
            }
        }
    }

    fn client_propose(&mut self, command: Vec<u8>, effects: &mut Vec<Effect>) {
        if !matches!(self.role, RoleState::Leader(_)) {
            effects.push(Effect::NotLeader {
                leader_hint: self.leader_id,
            });
            return;
        }
        let index = self.last_log_index() + 1;
        self.log.push(LogEntry {
            term: self.current_term,
            index,
            command,
        });
        effects.push(Effect::ProposalAccepted {
            index,
            term: self.current_term,
        });
        self.replicate_to_all(effects);
        self.advance_commit(effects);
    }

    /// Largest index stored on a strict majority whose entry belongs to the
    /// current term.
    fn advance_commit(&mut self, effects: &mut Vec<Effect>) {
        let RoleState::Leader(volatile) = &self.role else {
            return;
        };
        let majority = self.majority();
        let mut candidate = self.last_log_index();
        while candidate > self.commit_index {
            if self.log[candidate as usize - 1].term != self.current_term {
                break;
            }
            let replicas = 1 + volatile.match_index.values().filter(|m| **m >= candidate).count();
            if replicas >= majority {
                self.commit_index = candidate;
                self.apply(effects);
                return;
            }
            candidate -= 1;
        }
    }

    fn apply(&mut self, effects: &mut Vec<Effect>) {
        if self.commit_index > self.last_applied {
            let entries = self.log[self.last_applied as usize..self.commit_index as usize].to_vec();
            self.last_applied = self.commit_index;
            effects.push(Effect::Commit { entries });
        }
    }
}

/// Functional form of [`NodeState::step`].
pub fn handle_event(mut state: NodeState, event: Event) -> (NodeState, Vec<Effect>) {
    let effects = state.step(event);
    (state, effects)
}
