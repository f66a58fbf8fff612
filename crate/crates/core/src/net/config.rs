//! Cluster configuration file.
//!
//! Flat UTF-8 `key = value` lines; `#` starts a comment. `node` and
//! `master_key` may repeat:
//!
//! ```text
//! node = 1@127.0.0.1:7001
//! node = 2@127.0.0.1:7002
//! transport = secure
//! master_key = 1:000102...1f      # key_id:64 hex chars
//! active_key_id = 1
//! ```
//!
//! Optional keys: `election_timeout_min_ms`, `election_timeout_max_ms`,
//! `heartbeat_ms`, `cache_policy` (`lru`/`unbounded`/`ttl`),
//! `cache_capacity`, `cache_ttl_ms`, `seed`, `confidential`, `tap_file`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::transport::TransportMode;
use crate::raft::{Micros, NodeId, RaftConfig};
use crate::secure::{CachePolicy, Keyring, MasterKey};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: master key must be 64 hex characters")]
    MalformedHex { line: usize },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("duplicate master key id {0}")]
    DuplicateKeyId(u32),
    #[error("secure transport requires at least one master_key")]
    SecureWithoutKey,
    #[error("active_key_id {0} does not match any master_key")]
    UnresolvedActiveKey(u32),
    #[error("election timeout bounds are inverted or zero")]
    BadTimeouts,
    #[error("node {0} is not part of the cluster")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeAddress {
    pub id: NodeId,
    pub addr: String,
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub nodes: Vec<NodeAddress>,
    pub transport_mode: TransportMode,
    pub master_keys: Vec<MasterKey>,
    pub active_key_id: Option<u32>,
    pub election_timeout_min: Micros,
    pub election_timeout_max: Micros,
    pub heartbeat_interval: Micros,
    pub cache_policy: CachePolicy,
    pub rng_seed: u64,
    /// Encrypt secure-mode traffic (as opposed to auth-only tags).
    pub confidential: bool,
    /// Live nodes append every received peer frame here when set.
    pub tap_file: Option<PathBuf>,
}

impl ClusterConfig {
    /// A config with default timing for the given members.
    pub fn new(nodes: Vec<NodeAddress>, transport_mode: TransportMode) -> Self {
        ClusterConfig {
            nodes,
            transport_mode,
            master_keys: Vec::new(),
            active_key_id: None,
            election_timeout_min: RaftConfig::DEFAULT_ELECTION_MIN,
            election_timeout_max: RaftConfig::DEFAULT_ELECTION_MAX,
            heartbeat_interval: RaftConfig::DEFAULT_HEARTBEAT,
            cache_policy: CachePolicy::default(),
            rng_seed: 0,
            confidential: true,
            tap_file: None,
        }
    }

    pub fn members(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn address_of(&self, id: NodeId) -> Option<&str> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.addr.as_str())
    }

    pub fn raft_config(&self, id: NodeId) -> Result<RaftConfig, ConfigError> {
        if !self.nodes.iter().any(|n| n.id == id) {
            return Err(ConfigError::UnknownNode(id));
        }
        Ok(RaftConfig {
            id,
            members: self.members(),
            election_timeout_min: self.election_timeout_min,
            election_timeout_max: self.election_timeout_max,
            heartbeat_interval: self.heartbeat_interval,
        })
    }

    pub fn keyring(&self) -> Keyring {
        self.master_keys.iter().cloned().collect()
    }

    pub fn active_key(&self) -> Option<&MasterKey> {
        let id = self.active_key_id?;
        self.master_keys.iter().find(|k| k.key_id == id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nodes.is_empty() {
            return Err(ConfigError::MissingKey("node"));
        }
        let mut ids = HashSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id) {
                return Err(ConfigError::DuplicateNodeId(node.id));
            }
        }
        let mut key_ids = HashSet::new();
        for key in &self.master_keys {
            if !key_ids.insert(key.key_id) {
                return Err(ConfigError::DuplicateKeyId(key.key_id));
            }
        }
        if self.election_timeout_min == 0
            || self.election_timeout_min > self.election_timeout_max
            || self.heartbeat_interval == 0
        {
            return Err(ConfigError::BadTimeouts);
        }
        if self.transport_mode == TransportMode::Secure {
            if self.master_keys.is_empty() {
                return Err(ConfigError::SecureWithoutKey);
            }
            let active = self.active_key_id.ok_or(ConfigError::MissingKey("active_key_id"))?;
            if self.active_key().is_none() {
                return Err(ConfigError::UnresolvedActiveKey(active));
            }
        }
        Ok(())
    }
}

fn invalid(line: usize, key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn number<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: ToString,
{
    value.parse().map_err(|e: T::Err| invalid(line, key, e))
}

impl FromStr for ClusterConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut nodes = Vec::new();
        let mut mode = None;
        let mut master_keys = Vec::new();
        let mut active_key_id = None;
        let mut cfg = ClusterConfig::new(Vec::new(), TransportMode::Plaintext);
        let mut cache_kind = "lru".to_string();
        let mut capacity = CachePolicy::DEFAULT_CAPACITY;
        let mut ttl_ms: u64 = 60_000;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "node" => {
                    let (id, addr) = value
                        .split_once('@')
                        .ok_or_else(|| invalid(line, key, "expected id@host:port"))?;
                    let id: u64 = number(line, key, id.trim())?;
                    if id == 0 || NodeId(id).is_client() {
                        return Err(invalid(line, key, "node id out of range"));
                    }
                    let addr = addr.trim();
                    if !addr.contains(':') {
                        return Err(invalid(line, key, "expected host:port"));
                    }
                    nodes.push(NodeAddress {
                        id: NodeId(id),
                        addr: addr.to_string(),
                    });
                }
                "transport" => mode = Some(value.parse().map_err(|e: String| invalid(line, key, e))?),
                "master_key" => {
                    let (id, hex_key) = value
                        .split_once(':')
                        .ok_or_else(|| invalid(line, key, "expected key_id:hex"))?;
                    let id: u32 = number(line, key, id.trim())?;
                    let hex_key = hex_key.trim();
                    if hex_key.len() != 64 {
                        return Err(ConfigError::MalformedHex { line });
                    }
                    master_keys.push(
                        MasterKey::from_hex(id, hex_key).map_err(|_| ConfigError::MalformedHex { line })?,
                    );
                }
                "active_key_id" => active_key_id = Some(number(line, key, value)?),
                "election_timeout_min_ms" => cfg.election_timeout_min = number::<u64>(line, key, value)? * 1000,
                "election_timeout_max_ms" => cfg.election_timeout_max = number::<u64>(line, key, value)? * 1000,
                "heartbeat_ms" => cfg.heartbeat_interval = number::<u64>(line, key, value)? * 1000,
                "cache_policy" => match value {
                    "lru" | "unbounded" | "ttl" => cache_kind = value.to_string(),
                    _ => return Err(invalid(line, key, "expected lru, unbounded or ttl")),
                },
                "cache_capacity" => {
                    capacity = number(line, key, value)?;
                    if capacity == 0 {
                        return Err(invalid(line, key, "must be positive"));
                    }
                }
                "cache_ttl_ms" => ttl_ms = number(line, key, value)?,
                "seed" => cfg.rng_seed = number(line, key, value)?,
                "confidential" => cfg.confidential = number(line, key, value)?,
                "tap_file" => cfg.tap_file = Some(PathBuf::from(value)),
                other => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: other.to_string(),
                    })
                }
            }
        }
        cfg.nodes = nodes;
        cfg.transport_mode = mode.ok_or(ConfigError::MissingKey("transport"))?;
        cfg.master_keys = master_keys;
        cfg.active_key_id = active_key_id;
        cfg.cache_policy = match cache_kind.as_str() {
            "unbounded" => CachePolicy::Unbounded,
            "ttl" => CachePolicy::Ttl { ttl: ttl_ms * 1000 },
            _ => CachePolicy::Lru { capacity },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ClusterConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse()
}
