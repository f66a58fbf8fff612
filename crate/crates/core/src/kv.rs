//! Key-value store applied on commit.
//!
//! Commands are encoded as `op (1 B) ‖ key_len (u32 BE) ‖ key ‖ value_len (u32 BE) ‖ value`.
//! `Get` and `Delete` carry an empty value.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KvCommand {
    Set { key: Vec<u8>, value: Vec<u8> },
    Get { key: Vec<u8> },
    Delete { key: Vec<u8> },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KvDecodeError {
    #[error("empty command")]
    Empty,
    #[error("unknown op code {0:#04x}")]
    UnknownOp(u8),
    #[error("truncated command")]
    Truncated,
    #[error("trailing bytes after command")]
    Trailing,
}

const OP_SET: u8 = 1;
const OP_GET: u8 = 2;
const OP_DELETE: u8 = 3;

impl KvCommand {
    pub fn encode(&self) -> Vec<u8> {
        let (op, key, value): (u8, &[u8], &[u8]) = match self {
            KvCommand::Set { key, value } => (OP_SET, key, value),
            KvCommand::Get { key } => (OP_GET, key, &[]),
            KvCommand::Delete { key } => (OP_DELETE, key, &[]),
        };
        let mut out = Vec::with_capacity(9 + key.len() + value.len());
        out.push(op);
        out.extend_from_slice(&(key.len() as u32).to_be_bytes());
        out.extend_from_slice(key);
        out.extend_from_slice(&(value.len() as u32).to_be_bytes());
        out.extend_from_slice(value);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, KvDecodeError> {
        let (&op, mut rest) = bytes.split_first().ok_or(KvDecodeError::Empty)?;
        let mut field = || -> Result<Vec<u8>, KvDecodeError> {
            let (len, tail) = rest.split_at_checked(4).ok_or(KvDecodeError::Truncated)?;
            let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
            let (value, tail) = tail.split_at_checked(len).ok_or(KvDecodeError::Truncated)?;
            rest = tail;
            Ok(value.to_vec())
        };
        let key = field()?;
        let value = field()?;
        if !rest.is_empty() {
            return Err(KvDecodeError::Trailing);
        }
        match op {
            OP_SET => Ok(KvCommand::Set { key, value }),
            OP_GET => Ok(KvCommand::Get { key }),
            OP_DELETE => Ok(KvCommand::Delete { key }),
            other => Err(KvDecodeError::UnknownOp(other)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvStore {
    data: BTreeMap<Vec<u8>, Vec<u8>>,
    applied: u64,
}

impl KvStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one committed command. Undecodable commands are counted as
    /// applied but leave the map untouched. Returns the value read by `Get`.
    pub fn apply(&mut self, command: &[u8]) -> Option<Vec<u8>> {
        self.applied += 1;
        match KvCommand::decode(command).ok()? {
            KvCommand::Set { key, value } => self.data.insert(key, value),
            KvCommand::Get { key } => self.data.get(&key).cloned(),
            KvCommand::Delete { key } => self.data.remove(&key),
        }
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.data.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn applied(&self) -> u64 {
        self.applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_delete() {
        let mut store = KvStore::new();
        let set = KvCommand::Set {
            key: b"k".to_vec(),
            value: b"v".to_vec(),
        };
        store.apply(&set.encode());
        assert_eq!(store.get(b"k"), Some(&b"v"[..]));
        let got = store.apply(&KvCommand::Get { key: b"k".to_vec() }.encode());
        assert_eq!(got, Some(b"v".to_vec()));
        store.apply(&KvCommand::Delete { key: b"k".to_vec() }.encode());
        assert!(store.is_empty());
        assert_eq!(store.applied(), 3);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(KvCommand::decode(&[]), Err(KvDecodeError::Empty));
        assert_eq!(KvCommand::decode(&[1, 0, 0]), Err(KvDecodeError::Truncated));
        assert_eq!(
            KvCommand::decode(&[9, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(KvDecodeError::UnknownOp(9))
        );
        let mut bytes = KvCommand::Get { key: b"a".to_vec() }.encode();
        bytes.push(0);
        assert_eq!(KvCommand::decode(&bytes), Err(KvDecodeError::Trailing));
    }

    #[test]
    fn garbage_command_is_counted_not_applied() {
        let mut store = KvStore::new();
        assert_eq!(store.apply(b"\xffjunk"), None);
        assert!(store.is_empty());
        assert_eq!(store.applied(), 1);
    }
}
