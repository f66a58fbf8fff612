//! Canonical binary encoding of [`RaftMessage`].
//!
//! One tag byte, then fields in declaration order. Integers are fixed-width
//! big-endian, booleans a single `0x00`/`0x01` byte, byte strings and entry
//! lists carry a `u32` length prefix.

use thiserror::Error;

use crate::raft::{LogEntry, NodeId, RaftMessage, Term};

const TAG_REQUEST_VOTE: u8 = 0x01;
const TAG_REQUEST_VOTE_RESPONSE: u8 = 0x02;
const TAG_APPEND_ENTRIES: u8 = 0x03;
const TAG_APPEND_ENTRIES_RESPONSE: u8 = 0x04;
const TAG_CLIENT_COMMAND: u8 = 0x05;
const TAG_CLIENT_RESPONSE: u8 = 0x06;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("empty message")]
    Empty,
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("message truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid boolean byte {0:#04x}")]
    InvalidBool(u8),
}

pub fn encode_message(msg: &RaftMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    match msg {
        RaftMessage::RequestVote {
            term,
            candidate_id,
            last_log_index,
            last_log_term,
        } => {
            out.push(TAG_REQUEST_VOTE);
            put_u64(&mut out, term.0);
            put_u64(&mut out, candidate_id.0);
            put_u64(&mut out, *last_log_index);
            put_u64(&mut out, last_log_term.0);
        }
        RaftMessage::RequestVoteResponse { term, vote_granted } => {
            out.push(TAG_REQUEST_VOTE_RESPONSE);
            put_u64(&mut out, term.0);
            out.push(*vote_granted as u8);
        }
        RaftMessage::AppendEntries {
            term,
            leader_id,
            prev_log_index,
            prev_log_term,
            entries,
            leader_commit,
        } => {
            out.push(TAG_APPEND_ENTRIES);
            put_u64(&mut out, term.0);
            put_u64(&mut out, leader_id.0);
            put_u64(&mut out, *prev_log_index);
            put_u64(&mut out, prev_log_term.0);
            out.extend_from_slice(&(entries.len() as u32).to_be_bytes());
            for entry in entries {
                put_u64(&mut out, entry.term.0);
                put_u64(&mut out, entry.index);
                put_bytes(&mut out, &entry.command);
            }
            put_u64(&mut out, *leader_commit);
        }
        RaftMessage::AppendEntriesResponse {
            term,
            success,
            match_index,
        } => {
            out.push(TAG_APPEND_ENTRIES_RESPONSE);
            put_u64(&mut out, term.0);
            out.push(*success as u8);
            put_u64(&mut out, *match_index);
        }
        RaftMessage::ClientCommand { command } => {
            out.push(TAG_CLIENT_COMMAND);
            put_bytes(&mut out, command);
        }
        RaftMessage::ClientResponse { committed, index } => {
            out.push(TAG_CLIENT_RESPONSE);
            out.push(*committed as u8);
            put_u64(&mut out, *index);
        }
    }
    out
}

pub fn decode_message(bytes: &[u8]) -> Result<RaftMessage, DecodeError> {
    let (&tag, body) = bytes.split_first().ok_or(DecodeError::Empty)?;
    let mut r = Reader { buf: body };
    let msg = match tag {
        TAG_REQUEST_VOTE => RaftMessage::RequestVote {
            term: Term(r.u64()?),
            candidate_id: NodeId(r.u64()?),
            last_log_index: r.u64()?,
            last_log_term: Term(r.u64()?),
        },
        TAG_REQUEST_VOTE_RESPONSE => RaftMessage::RequestVoteResponse {
            term: Term(r.u64()?),
            vote_granted: r.bool()?,
        },
        TAG_APPEND_ENTRIES => {
            let term = Term(r.u64()?);
            let leader_id = NodeId(r.u64()?);
            let prev_log_index = r.u64()?;
            let prev_log_term = Term(r.u64()?);
            let count = r.u32()? as usize;
            // each entry needs at least 20 bytes; refuse absurd counts early
            if count > r.buf.len() / 20 {
                return Err(DecodeError::Truncated);
            }
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                entries.push(LogEntry {
                    term: Term(r.u64()?),
                    index: r.u64()?,
                    command: r.bytes()?,
                });
            }
            RaftMessage::AppendEntries {
                term,
                leader_id,
                prev_log_index,
                prev_log_term,
                entries,
                leader_commit: r.u64()?,
            }
        }
        TAG_APPEND_ENTRIES_RESPONSE => RaftMessage::AppendEntriesResponse {
            term: Term(r.u64()?),
            success: r.bool()?,
            match_index: r.u64()?,
        },
        TAG_CLIENT_COMMAND => RaftMessage::ClientCommand { command: r.bytes()? },
        TAG_CLIENT_RESPONSE => RaftMessage::ClientResponse {
            committed: r.bool()?,
            index: r.u64()?,
        },
        other => return Err(DecodeError::UnknownTag(other)),
    };
    if !r.buf.is_empty() {
        return Err(DecodeError::Trailing(r.buf.len()));
    }
    Ok(msg)
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DecodeError> {
        let (head, tail) = self.buf.split_at_checked(n).ok_or(DecodeError::Truncated)?;
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(DecodeError::InvalidBool(other)),
        }
    }

    fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heartbeat() -> RaftMessage {
        RaftMessage::AppendEntries {
            term: Term(1),
            leader_id: NodeId(1),
            prev_log_index: 0,
            prev_log_term: Term(0),
            entries: vec![],
            leader_commit: 0,
        }
    }

    #[test]
    fn heartbeat_golden_vector() {
        let golden = include_str!("../../tests/golden/heartbeat_append_entries.hex");
        assert_eq!(hex::encode(encode_message(&heartbeat())), golden.trim());
        assert_eq!(decode_message(&hex::decode(golden.trim()).unwrap()).unwrap(), heartbeat());
    }

    #[test]
    fn truncation_is_rejected_at_every_length() {
        let msg = RaftMessage::AppendEntries {
            term: Term(3),
            leader_id: NodeId(2),
            prev_log_index: 4,
            prev_log_term: Term(2),
            entries: vec![LogEntry {
                term: Term(3),
                index: 5,
                command: b"set x 1".to_vec(),
            }],
            leader_commit: 4,
        };
        let bytes = encode_message(&msg);
        for cut in 0..bytes.len() {
            assert!(decode_message(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn unknown_tag_and_trailing_bytes() {
        assert_eq!(decode_message(&[0x7f]), Err(DecodeError::UnknownTag(0x7f)));
        let mut bytes = encode_message(&RaftMessage::ClientResponse {
            committed: true,
            index: 9,
        });
        bytes.push(0);
        assert_eq!(decode_message(&bytes), Err(DecodeError::Trailing(1)));
        let mut bad_bool = encode_message(&RaftMessage::RequestVoteResponse {
            term: Term(1),
            vote_granted: true,
        });
        *bad_bool.last_mut().unwrap() = 2;
        assert_eq!(decode_message(&bad_bool), Err(DecodeError::InvalidBool(2)));
    }
}
