//! Deterministic Raft state machine.
//!
//! A node consumes [`Event`]s one at a time and answers with [`Effect`]s.
//! Nothing here touches sockets, clocks or global randomness: election
//! timeouts come from a generator seeded by whoever constructs the node, so
//! the same state and event always yield the same output.

mod node;
mod types;


pub use node::{handle_event, LeaderVolatile, NodeState};
pub use types::{
    Effect, Event, LogEntry, MessageKind, Micros, NodeId, RaftConfig, RaftMessage, Role, Term,
};
