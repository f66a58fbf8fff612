use std::fmt;

/// Virtual time in microseconds. Live nodes map wall-clock elapsed time onto it.
pub type Micros = u64;

/// Endpoint identifier. Cluster members use `1..CLIENT_BASE`; ids from
/// `CLIENT_BASE` upward name client endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl NodeId {
    pub const CLIENT_BASE: u64 = 1 << 32;

    pub fn client(n: u64) -> NodeId {
        NodeId(Self::CLIENT_BASE + n)
    }

    pub fn is_client(self) -> bool {
        self.0 >= Self::CLIENT_BASE
    }

    /// Identity bytes bound into key derivation and AAD.
    pub fn peer_id(self) -> Vec<u8> {
        self.0.to_string().into_bytes()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(pub u64);

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogEntry {
    pub term: Term,
    /// 1-based position in the log.
    pub index: u64,
    pub command: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RaftMessage {
    RequestVote {
        term: Term,
        candidate_id: NodeId,
        last_log_index: u64,
        last_log_term: Term,
    },
    RequestVoteResponse {
        term: Term,
        vote_granted: bool,
    },
    AppendEntries {
        term: Term,
        leader_id: NodeId,
        prev_log_index: u64,
        prev_log_term: Term,
        entries: Vec<LogEntry>,
        leader_commit: u64,
    },
    AppendEntriesResponse {
        term: Term,
        success: bool,
        match_index: u64,
    },
    ClientCommand {
        command: Vec<u8>,
    },
    ClientResponse {
        committed: bool,
        index: u64,
    },
}

impl RaftMessage {
    pub fn term(&self) -> Option<Term> {
        match self {
            RaftMessage::RequestVote { term, .. }
            | RaftMessage::RequestVoteResponse { term, .. }
            | RaftMessage::AppendEntries { term, .. }
            | RaftMessage::AppendEntriesResponse { term, .. } => Some(*term),
            RaftMessage::ClientCommand { .. } | RaftMessage::ClientResponse { .. } => None,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            RaftMessage::RequestVote { .. } => MessageKind::RequestVote,
            RaftMessage::RequestVoteResponse { .. } => MessageKind::RequestVoteResponse,
            RaftMessage::AppendEntries { .. } => MessageKind::AppendEntries,
            RaftMessage::AppendEntriesResponse { .. } => MessageKind::AppendEntriesResponse,
            RaftMessage::ClientCommand { .. } => MessageKind::ClientCommand,
            RaftMessage::ClientResponse { .. } => MessageKind::ClientResponse,
        }
    }

    pub fn is_heartbeat(&self) -> bool {
        matches!(self, RaftMessage::AppendEntries { entries, .. } if entries.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    RequestVote,
    RequestVoteResponse,
    AppendEntries,
    AppendEntriesResponse,
    ClientCommand,
    ClientResponse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Tick { now: Micros },
    Inbound { from: NodeId, msg: RaftMessage },
    ClientSubmit { command: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send { to: NodeId, msg: RaftMessage },
    Broadcast { msg: RaftMessage },
    /// Entries newly applied, in index order.
    Commit { entries: Vec<LogEntry> },
    ResetElectionTimer { deadline: Micros },
    BecameLeader { term: Term },
    SteppedDown { term: Term },
    /// A client command was appended at `index` by this leader.
    ProposalAccepted { index: u64, term: Term },
    /// A client command reached a non-leader.
    NotLeader { leader_hint: Option<NodeId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaftConfig {
    pub id: NodeId,
    /// Every member of the cluster, including `id`.
    pub members: Vec<NodeId>,
    pub election_timeout_min: Micros,
    pub election_timeout_max: Micros,
    pub heartbeat_interval: Micros,
}

impl RaftConfig {
    pub const DEFAULT_ELECTION_MIN: Micros = 150_000;
    pub const DEFAULT_ELECTION_MAX: Micros = 300_000;
    pub const DEFAULT_HEARTBEAT: Micros = 50_000;

    pub fn new(id: NodeId, members: Vec<NodeId>) -> Self {
        RaftConfig {
            id,
            members,
            election_timeout_min: Self::DEFAULT_ELECTION_MIN,
            election_timeout_max: Self::DEFAULT_ELECTION_MAX,
            heartbeat_interval: Self::DEFAULT_HEARTBEAT,
        }
    }
}
