use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use super::TxId;
use crate::raft::Micros;

/// Time source for TTL expiry.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> Micros;
}

/// Clock that only moves when told to. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(start: Micros) -> Self {
        ManualClock(Arc::new(AtomicU64::new(start)))
    }

    pub fn set(&self, now: Micros) {
        self.0.store(now, Ordering::SeqCst);
    }

    pub fn advance(&self, by: Micros) {
        self.0.fetch_add(by, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Micros {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Micros {
        self.origin.elapsed().as_micros() as Micros
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CachePolicy {
    /// Never evicts.
    Unbounded,
    /// Keeps at most `capacity` keys, evicting the least recently remembered.
    Lru { capacity: usize },
    /// Forgets a key `ttl` after it was last remembered.
    Ttl { ttl: Micros },
}

impl CachePolicy {
    pub const DEFAULT_CAPACITY: usize = 1 << 20;
}

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy::Lru {
            capacity: Self::DEFAULT_CAPACITY,
        }
    }
}

/// `(peer_id, tx_id)` pair identifying one accepted message.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub peer_id: Box<[u8]>,
    pub tx_id: TxId,
}

impl CacheKey {
    pub fn new(peer_id: &[u8], tx_id: &TxId) -> Self {
        CacheKey {
            peer_id: peer_id.into(),
            tx_id: *tx_id,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    seq: u64,
    stamp: Micros,
}

/// Set of recently accepted message identifiers.
///
/// `seen` never mutates; `remember` inserts (or refreshes) and then applies
/// the eviction policy. Recency order is insertion order of the latest
/// `remember` for each key.
#[derive(Debug)]
pub struct ReplayCache {
    policy: CachePolicy,
    slots: HashMap<CacheKey, Slot>,
    order: BTreeMap<u64, CacheKey>,
    next_seq: u64,
    clock: Arc<dyn Clock>,
    evictions: u64,
}

impl ReplayCache {
    pub fn new(policy: CachePolicy) -> Self {
        Self::with_clock(policy, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(policy: CachePolicy, clock: Arc<dyn Clock>) -> Self {
        if let CachePolicy::Lru { capacity } = policy {
            assert!(capacity > 0, "LRU capacity must be positive");
        }
        ReplayCache {
            policy,
            slots: HashMap::new(),
            order: BTreeMap::new(),
            next_seq: 0,
            clock,
            evictions: 0,
        }
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    pub fn seen(&self, peer_id: &[u8], tx_id: &TxId) -> bool {
        let Some(slot) = self.slots.get(&CacheKey::new(peer_id, tx_id)) else {
            return false;
        };
        match self.policy {
            CachePolicy::Ttl { ttl } => self.clock.now() < slot.stamp.saturating_add(ttl),
            _ => true,
        }
    }

    pub fn remember(&mut self, peer_id: &[u8], tx_id: &TxId) {
        let now = self.clock.now();
        if let CachePolicy::Ttl { ttl } = self.policy {
            self.purge_expired(now, ttl);
        }
        let key = CacheKey::new(peer_id, tx_id);
        let seq = self.next_seq;
        self.next_seq += 1;
        if let Some(old) = self.slots.insert(key.clone(), Slot { seq, stamp: now }) {
            self.order.remove(&old.seq);
        }
        self.order.insert(seq, key);
        if let CachePolicy::Lru { capacity } = self.policy {
            while self.slots.len() > capacity {
                self.evict_oldest();
            }
        }
    }

    fn purge_expired(&mut self, now: Micros, ttl: Micros) {
        while let Some((_, key)) = self.order.first_key_value() {
            let stamp = self.slots[key].stamp;
            if now < stamp.saturating_add(ttl) {
                break;
            }
            self.evict_oldest();
        }
    }

    fn evict_oldest(&mut self) {
        if let Some((_, key)) = self.order.pop_first() {
            self.slots.remove(&key);
            self.evictions += 1;
        }
    }

    /// Stored keys, including TTL entries that have expired but not yet been
    /// purged.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }
}
