//! Deterministic discrete-event network.
//!
//! Frames travel over directed links with a seeded delay of
//! `base + uniform(0..=jitter) + size × per_byte`. Each link is FIFO, like a
//! stream connection. Events fire in `(time, sequence)` order, so two events
//! due at the same instant fire in the order they were scheduled.
//!
//! Taps sit at the receiver's ingress: they see every frame that survives
//! transit, including injected ones, before the receiving transport judges
//! it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raft::{Micros, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub base_delay: Micros,
    pub jitter: Micros,
    /// Serialization cost in nanoseconds per frame byte.
    pub per_byte_nanos: u64,
    pub drop_probability: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            base_delay: 500,
            jitter: 500,
            per_byte_nanos: 8,
            drop_probability: 0.0,
        }
    }
}

/// Scripted network or node fault.
#[derive(Debug, Clone, PartialEq)]
pub enum FaultAction {
    Crash(NodeId),
    Restart(NodeId),
    /// Severs every link between the two groups, both directions.
    Partition(Vec<NodeId>, Vec<NodeId>),
    HealAll,
    SetDropProbability(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Frame {
        from: NodeId,
        to: NodeId,
        bytes: Vec<u8>,
        injected: bool,
    },
    Timer {
        node: NodeId,
        generation: u64,
    },
    Fault(FaultAction),
}

#[derive(Debug)]
struct Scheduled {
    at: Micros,
    seq: u64,
    event: SimEvent,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // min-heap on (at, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedFrame {
    pub time: Micros,
    pub from: NodeId,
    pub to: NodeId,
    /// Exact wire bytes, header included.
    pub bytes: Vec<u8>,
    pub injected: bool,
}

/// Ordered record of frames seen by one tap.
#[derive(Debug, Clone, Default)]
pub struct CaptureBuffer {
    /// Only frames addressed to this endpoint are kept, when set.
    pub target: Option<NodeId>,
    frames: Vec<CapturedFrame>,
}

impl CaptureBuffer {
    pub fn frames(&self) -> &[CapturedFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The newest `count` non-injected frames accepted by `filter`, oldest first.
    pub fn last_matching<F>(&self, count: usize, mut filter: F) -> Vec<&CapturedFrame>
    where
        F: FnMut(&CapturedFrame) -> bool,
    {
        let mut picked: Vec<&CapturedFrame> = self
            .frames
            .iter()
            .rev()
            .filter(|f| !f.injected && filter(f))
            .take(count)
            .collect();
        picked.reverse();
        picked
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapId(usize);

/// Per-directed-link frame accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub rejected: u64,
    pub in_flight: u64,
    /// Subset of `sent` that the attack harness placed on the link.
    pub injected: u64,
}

impl LinkStats {
    pub fn conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.rejected + self.in_flight
    }
}

#[derive(Debug)]
pub struct SimNetwork {
    now: Micros,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    rng: ChaCha8Rng,
    params: LinkParams,
    severed: BTreeSet<(NodeId, NodeId)>,
    link_tail: BTreeMap<(NodeId, NodeId), Micros>,
    links: BTreeMap<(NodeId, NodeId), LinkStats>,
    taps: Vec<CaptureBuffer>,
}

impl SimNetwork {
    pub fn new(params: LinkParams, seed: u64) -> Self {
        SimNetwork {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            params,
            severed: BTreeSet::new(),
            link_tail: BTreeMap::new(),
            links: BTreeMap::new(),
            taps: Vec::new(),
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn params(&self) -> LinkParams {
        self.params
    }

    pub fn set_drop_probability(&mut self, p: f64) {
        self.params.drop_probability = p.clamp(0.0, 1.0);
    }

    fn push(&mut self, at: Micros, event: SimEvent) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled { at, seq, event });
    }

    pub fn is_severed(&self, a: NodeId, b: NodeId) -> bool {
        self.severed.contains(&(a.min(b), a.max(b)))
    }

    pub fn partition(&mut self, left: &[NodeId], right: &[NodeId]) {
        for a in left {
            for b in right {
                if a != b {
                    self.severed.insert(((*a).min(*b), (*a).max(*b)));
                }
            }
        }
    }

    pub fn heal_all(&mut self) {
        self.severed.clear();
    }

    /// Queues a frame on `from → to`. Returns false if it was dropped.
    pub fn send(&mut self, from: NodeId, to: NodeId, bytes: Vec<u8>) -> bool {
        self.links.entry((from, to)).or_default().sent += 1;
        let dropped = self.rng.gen_bool(self.params.drop_probability);
        let jitter = self.rng.gen_range(0..=self.params.jitter);
        if dropped || self.is_severed(from, to) {
            self.links.entry((from, to)).or_default().dropped += 1;
            return false;
        }
        let transmit = bytes.len() as u64 * self.params.per_byte_nanos / 1000;
        let tail = self.link_tail.get(&(from, to)).copied().unwrap_or(0);
        let at = (self.now + self.params.base_delay + jitter + transmit).max(tail);
        self.link_tail.insert((from, to), at);
        self.links.entry((from, to)).or_default().in_flight += 1;
        self.push(
            at,
            SimEvent::Frame {
                from,
                to,
                bytes,
                injected: false,
            },
        );
        true
    }

    /// Places attacker-supplied bytes on `from → to`, due `delay` from now.
    /// Consumes no randomness.
    pub fn inject(&mut self, from: NodeId, to: NodeId, bytes: Vec<u8>, delay: Micros) {
        let stats = self.links.entry((from, to)).or_default();
        stats.sent += 1;
        stats.injected += 1;
        stats.in_flight += 1;
        let at = self.now + delay;
        self.push(
            at,
            SimEvent::Frame {
                from,
                to,
                bytes,
                injected: true,
            },
        );
    }

    pub fn schedule_timer(&mut self, node: NodeId, at: Micros, generation: u64) {
        self.push(at.max(self.now), SimEvent::Timer { node, generation });
    }

    pub fn schedule_fault(&mut self, at: Micros, fault: FaultAction) {
        self.push(at.max(self.now), SimEvent::Fault(fault));
    }

    pub fn peek_time(&self) -> Option<Micros> {
        self.queue.peek().map(|s| s.at)
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Pops the next event and advances the clock to it. Frames whose link
    /// was severed in transit are dropped here and never surface.
    pub fn next_event(&mut self) -> Option<(Micros, SimEvent)> {
        loop {
            let Scheduled { at, event, .. } = self.queue.pop()?;
            self.now = self.now.max(at);
            if let SimEvent::Frame {
                from,
                to,
                ref bytes,
                injected,
            } = event
            {
                let severed = self.is_severed(from, to);
                let stats = self.links.entry((from, to)).or_default();
                stats.in_flight -= 1;
                if severed {
                    stats.dropped += 1;
                    continue;
                }
                for tap in &mut self.taps {
                    if tap.target.is_none_or(|t| t == to) {
                        tap.frames.push(CapturedFrame {
                            time: self.now,
                            from,
                            to,
                            bytes: bytes.clone(),
                            injected,
                        });
                    }
                }
            }
            return Some((self.now, event));
        }
    }

    /// Moves the clock forward without delivering anything.
    pub fn advance_to(&mut self, t: Micros) {
        self.now = self.now.max(t);
    }

    pub fn record_delivered(&mut self, from: NodeId, to: NodeId) {
        self.links.entry((from, to)).or_default().delivered += 1;
    }

    pub fn record_rejected(&mut self, from: NodeId, to: NodeId) {
        self.links.entry((from, to)).or_default().rejected += 1;
    }

    pub fn record_dropped(&mut self, from: NodeId, to: NodeId) {
        self.links.entry((from, to)).or_default().dropped += 1;
    }

    pub fn add_tap(&mut self, target: Option<NodeId>) -> TapId {
        self.taps.push(CaptureBuffer {
            target,
            frames: Vec::new(),
        });
        TapId(self.taps.len() - 1)
    }

    pub fn tap(&self, id: TapId) -> &CaptureBuffer {
        &self.taps[id.0]
    }

    pub fn link_stats(&self) -> &BTreeMap<(NodeId, NodeId), LinkStats> {
        &self.links
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u64) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn lone_timer_fires() {
        let mut net = SimNetwork::new(LinkParams::default(), 1);
        net.schedule_timer(n(1), 150_000, 0);
        let (t, ev) = net.next_event().unwrap();
        assert_eq!(t, 150_000);
        assert_eq!(ev, SimEvent::Timer { node: n(1), generation: 0 });
        assert!(net.next_event().is_none());
    }

    #[test]
    fn equal_times_follow_enqueue_order() {
        let mut net = SimNetwork::new(LinkParams::default(), 1);
        net.inject(n(1), n(2), vec![1], 10);
        net.inject(n(3), n(2), vec![2], 10);
        net.schedule_timer(n(2), 10, 0);
        let order: Vec<SimEvent> = std::iter::from_fn(|| net.next_event().map(|(_, e)| e)).collect();
        assert!(matches!(&order[0], SimEvent::Frame { bytes, .. } if bytes == &[1]));
        assert!(matches!(&order[1], SimEvent::Frame { bytes, .. } if bytes == &[2]));
        assert!(matches!(order[2], SimEvent::Timer { .. }));
    }

    #[test]
    fn links_are_fifo_and_lossless_by_default() {
        let mut net = SimNetwork::new(LinkParams::default(), 9);
        for i in 0..200u8 {
            assert!(net.send(n(1), n(2), vec![i]));
        }
        let mut last_time = 0;
        let mut got = Vec::new();
        while let Some((t, SimEvent::Frame { bytes, from, to, .. })) = net.next_event() {
            assert!(t >= last_time);
            last_time = t;
            got.push(bytes[0]);
            net.record_delivered(from, to);
        }
        assert_eq!(got, (0..200).collect::<Vec<u8>>());
        let stats = net.link_stats()[&(n(1), n(2))];
        assert_eq!(stats.delivered, 200);
        assert!(stats.conserved());
    }

    #[test]
    fn partition_drops_frames() {
        let mut net = SimNetwork::new(LinkParams::default(), 1);
        net.partition(&[n(1)], &[n(2), n(3)]);
        assert!(!net.send(n(2), n(1), vec![0]));
        assert!(net.send(n(2), n(3), vec![0]));
        assert_eq!(net.link_stats()[&(n(2), n(1))].dropped, 1);
        // severed while in flight
        net.heal_all();
        assert!(net.send(n(1), n(2), vec![7]));
        net.partition(&[n(1)], &[n(2)]);
        let mut frames = 0;
        while let Some((_, ev)) = net.next_event() {
            if matches!(ev, SimEvent::Frame { .. }) {
                frames += 1;
            }
        }
        assert_eq!(frames, 1);
        assert!(net.link_stats().values().all(|s| s.in_flight == 0));
        assert_eq!(net.link_stats()[&(n(1), n(2))].dropped, 1);
    }

    #[test]
    fn taps_copy_without_mutating() {
        let mut net = SimNetwork::new(LinkParams::default(), 1);
        let all = net.add_tap(None);
        let only3 = net.add_tap(Some(n(3)));
        net.send(n(1), n(2), vec![1, 2, 3]);
        net.send(n(1), n(3), vec![4]);
        let mut delivered = Vec::new();
        while let Some((_, SimEvent::Frame { bytes, .. })) = net.next_event() {
            delivered.push(bytes);
        }
        assert_eq!(net.tap(all).len(), 2);
        assert_eq!(net.tap(only3).len(), 1);
        let tapped: Vec<Vec<u8>> = net.tap(all).frames().iter().map(|f| f.bytes.clone()).collect();
        assert_eq!(tapped, delivered);
    }

    #[test]
    fn drop_probability_is_seeded() {
        let run = |seed| {
            let mut net = SimNetwork::new(
                LinkParams {
                    drop_probability: 0.2,
                    ..LinkParams::default()
                },
                seed,
            );
            (0..1000).map(|_| net.send(n(1), n(2), vec![0])).collect::<Vec<bool>>()
        };
        assert_eq!(run(5), run(5));
        let delivered = run(5).iter().filter(|b| **b).count();
        assert!((700..900).contains(&delivered), "{delivered}");
    }
}
