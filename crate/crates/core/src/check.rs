//! Incremental checker for the Raft safety properties over a simulated trace.
//!
//! The checker watches every node step. It keeps a registry of every
//! `(index, term)` pair ever seen in any log, the longest committed sequence
//! observed anywhere, the leader of each term and per-node high-water marks.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::raft::{Effect, LogEntry, Micros, NodeId, NodeState, Role, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    ElectionSafety,
    LogMatching,
    LeaderCompleteness,
    StateMachineSafety,
    Monotonicity,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::ElectionSafety => "election-safety",
            Property::LogMatching => "log-matching",
            Property::LeaderCompleteness => "leader-completeness",
            Property::StateMachineSafety => "state-machine-safety",
            Property::Monotonicity => "monotonicity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub property: Property,
    pub time: Micros,
    pub node: NodeId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated at t={}us on node {}: {}",
            self.property, self.time, self.node, self.detail
        )
    }
}

fn command_hash(command: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    command.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone, Copy)]
struct Marks {
    term: Term,
    commit: u64,
}

#[derive(Debug, Default)]
pub struct SafetyChecker {
    leaders: BTreeMap<Term, NodeId>,
    /// `(index, term)` → `(term at index - 1, command hash)`.
    registry: HashMap<(u64, Term), (Term, u64)>,
    /// Longest committed prefix seen: `(entry term, command hash, term in
    /// which the entry was first seen committed)`.
    committed: Vec<(Term, u64, Term)>,
    marks: HashMap<NodeId, Marks>,
    violations: Vec<Violation>,
}

impl SafetyChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, property: Property, time: Micros, node: NodeId, detail: String) {
        self.violations.push(Violation {
            property,
            time,
            node,
            detail,
        });
    }

    /// Volatile state was lost; commit index may legitimately restart at 0.
    pub fn on_restart(&mut self, node: &NodeState) {
        self.marks.insert(
            node.id(),
            Marks {
                term: node.current_term(),
                commit: 0,
            },
        );
    }

    /// Checks the state of `node` after it processed one event that produced
    /// `effects`. `all` holds every node's current state, `node` included.
    pub fn after_step(&mut self, time: Micros, node: &NodeState, effects: &[Effect], all: &[&NodeState]) {
        let id = node.id();

        let marks = self.marks.get(&id).copied().unwrap_or(Marks {
            term: Term(0),
            commit: 0,
        });
        if node.current_term() < marks.term || node.commit_index() < marks.commit {
            self.flag(
                Property::Monotonicity,
                time,
                id,
                format!(
                    "term {} -> {}, commit {} -> {}",
                    marks.term,
                    node.current_term(),
                    marks.commit,
                    node.commit_index()
                ),
            );
        }
        self.marks.insert(
            id,
            Marks {
                term: node.current_term(),
                commit: node.commit_index(),
            },
        );

        self.check_log_matching(time, id, node.log());

        for effect in effects {
            if let Effect::BecameLeader { term } = effect {
                match self.leaders.get(term) {
                    Some(other) if *other != id => {
                        let detail = format!("nodes {other} and {id} both led term {term}");
                        self.flag(Property::ElectionSafety, time, id, detail);
                    }
                    _ => {
                        self.leaders.insert(*term, id);
                    }
                }
                self.check_completeness(time, node);
            }
        }

        let grew = self.check_committed(time, id, node.current_term(), node.committed());
        if grew {
            for other in all {
                if other.role() == Role::Leader {
                    self.check_completeness(time, other);
                }
            }
        }
    }

    fn check_log_matching(&mut self, time: Micros, id: NodeId, log: &[LogEntry]) {
        let mut prev = Term(0);
        for entry in log {
            let fingerprint = (prev, command_hash(&entry.command));
            match self.registry.get(&(entry.index, entry.term)) {
                Some(seen) if *seen != fingerprint => {
                    let detail = format!(
                        "entry ({}, term {}) differs from another log",
                        entry.index, entry.term
                    );
                    self.flag(Property::LogMatching, time, id, detail);
                    return;
                }
                Some(_) => {}
                None => {
                    self.registry.insert((entry.index, entry.term), fingerprint);
                }
            }
            prev = entry.term;
        }
    }

    /// Returns true when the global committed sequence was extended.
    fn check_committed(&mut self, time: Micros, id: NodeId, term: Term, committed: &[LogEntry]) -> bool {
        let overlap = committed.len().min(self.committed.len());
        for (i, entry) in committed[..overlap].iter().enumerate() {
            let (t, h, _) = self.committed[i];
            if (t, h) != (entry.term, command_hash(&entry.command)) {
                let detail = format!("committed entry {} disagrees with another node", entry.index);
                self.flag(Property::StateMachineSafety, time, id, detail);
                return false;
            }
        }
        if committed.len() > self.committed.len() {
            self.committed.extend(
                committed[overlap..]
                    .iter()
                    .map(|e| (e.term, command_hash(&e.command), term)),
            );
            return true;
        }
        false
    }

    /// Entries committed in earlier terms must be in the leader's log. The
    /// observed commit term is an upper bound on the real one, so a stale
    /// leader of an older term is never held to later commits.
    fn check_completeness(&mut self, time: Micros, leader: &NodeState) {
        let log = leader.log();
        for (i, (term, hash, committed_in)) in self.committed.iter().enumerate() {
            if *committed_in >= leader.current_term() {
                continue;
            }
            let present = log
                .get(i)
                .is_some_and(|e| e.term == *term && command_hash(&e.command) == *hash);
            if !present {
                let detail = format!(
                    "leader of term {} lacks committed entry {}",
                    leader.current_term(),
                    i + 1
                );
                self.flag(Property::LeaderCompleteness, time, leader.id(), detail);
                return;
            }
        }
    }
}
