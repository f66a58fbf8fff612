//! Network adversary: taps links, replays captured frames verbatim and
//! forges AppendEntries messages. The attacker never holds a master key.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kv::KvCommand;
use crate::net::live::{inject_frames, query_metrics, read_tap_file, LiveError};
use crate::net::{
    decode_frame, decode_message, encode_frame, encode_message, CapturedFrame, ClusterConfig, SimCluster,
    SimConfig, TapId, TransportMode,
};
use crate::raft::{LogEntry, MessageKind, Micros, NodeId, RaftMessage, Term};
use crate::scenario::{set_command, MILLI, SECOND};
use crate::secure::{SecureEnvelope, NONCE_LEN, TAG_LEN, TX_ID_LEN};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("no captured frames match the replay filter")]
    EmptyCapture,
    #[error("no leader was elected during warm-up")]
    NoLeader,
    #[error("target {0} is not a cluster member")]
    UnknownTarget(NodeId),
}

/// Selects captured frames. Message kinds are only visible when the
/// captured payload decodes as a plaintext message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptureFilter {
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub kind: Option<MessageKind>,
    pub min_len: Option<usize>,
    pub max_len: Option<usize>,
}

impl CaptureFilter {
    pub fn matches(&self, frame: &CapturedFrame) -> bool {
        if frame.injected {
            return false;
        }
        if self.from.is_some_and(|f| f != frame.from) || self.to.is_some_and(|t| t != frame.to) {
            return false;
        }
        if self.min_len.is_some_and(|m| frame.bytes.len() < m)
            || self.max_len.is_some_and(|m| frame.bytes.len() > m)
        {
            return false;
        }
        match self.kind {
            None => true,
            Some(kind) => peek_plaintext(&frame.bytes).is_some_and(|m| m.kind() == kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pick {
    Newest,
    Oldest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgedEntry {
    pub term: Term,
    pub command: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackScript {
    /// Re-sends `count` captured frames addressed to `target`, unmodified,
    /// `delay` after the attack starts.
    ReplayLast {
        count: usize,
        delay: Micros,
        target: NodeId,
        filter: CaptureFilter,
        pick: Pick,
    },
    /// Sends a fabricated AppendEntries to `target` claiming to come from
    /// `impersonate`.
    EntryAttack {
        forged: ForgedEntry,
        target: NodeId,
        impersonate: NodeId,
    },
}

impl AttackScript {
    pub fn target(&self) -> NodeId {
        match self {
            AttackScript::ReplayLast { target, .. } | AttackScript::EntryAttack { target, .. } => *target,
        }
    }
}

/// Decodes a frame as a plaintext message, if it is one.
pub fn peek_plaintext(frame: &[u8]) -> Option<RaftMessage> {
    decode_frame(frame).ok().and_then(|p| decode_message(p).ok())
}

/// What the attacker learned about the wire format from its captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireStyle {
    Plaintext,
    /// Envelopes carrying this key id in their header.
    Envelope { key_id: u32 },
}

pub fn infer_style<'a>(frames: impl IntoIterator<Item = &'a [u8]>) -> WireStyle {
    for frame in frames {
        if peek_plaintext(frame).is_some() {
            return WireStyle::Plaintext;
        }
        if let Some(env) = decode_frame(frame)
            .ok()
            .and_then(|p| SecureEnvelope::decode(p).ok())
        {
            return WireStyle::Envelope { key_id: env.key_id };
        }
    }
    WireStyle::Plaintext
}

/// Last log position of `target` and the highest term visible in plaintext
/// captures. Both are zero when nothing is readable.
pub fn infer_log_position<'a>(frames: impl IntoIterator<Item = (&'a [u8], NodeId)>, target: NodeId) -> (u64, Term, Term) {
    let mut index = 0;
    let mut term_at = Term(0);
    let mut highest = Term(0);
    for (bytes, to) in frames {
        let Some(msg) = peek_plaintext(bytes) else {
            continue;
        };
        if let Some(t) = msg.term() {
            highest = highest.max(t);
        }
        if to != target {
            continue;
        }
        if let RaftMessage::AppendEntries {
            prev_log_index,
            prev_log_term,
            entries,
            ..
        } = &msg
        {
            match entries.last() {
                Some(last) => {
                    index = last.index;
                    term_at = last.term;
                }
                None => {
                    index = *prev_log_index;
                    term_at = *prev_log_term;
                }
            }
        }
    }
    (index, term_at, highest)
}

/// The AppendEntries an entry attack sends: one fabricated entry appended
/// after `(prev_index, prev_term)` and immediately declared committed.
pub fn forged_append(forged: &ForgedEntry, impersonate: NodeId, prev_index: u64, prev_term: Term) -> RaftMessage {
    RaftMessage::AppendEntries {
        term: forged.term,
        leader_id: impersonate,
        prev_log_index: prev_index,
        prev_log_term: prev_term,
        entries: vec![LogEntry {
            term: forged.term,
            index: prev_index + 1,
            command: forged.command.clone(),
        }],
        leader_commit: prev_index + 1,
    }
}

/// Frames `msg` the way the attacker can: raw in plaintext clusters; inside
/// an envelope with random nonce, tx id and tag otherwise.
pub fn forge_frame<R: RngCore + ?Sized>(msg: &RaftMessage, style: WireStyle, rng: &mut R) -> Vec<u8> {
    let encoded = encode_message(msg);
    let payload = match style {
        WireStyle::Plaintext => encoded,
        WireStyle::Envelope { key_id } => {
            let mut nonce = [0u8; NONCE_LEN];
            let mut tx_id = [0u8; TX_ID_LEN];
            let mut tag = [0u8; TAG_LEN];
            rng.fill_bytes(&mut nonce);
            rng.fill_bytes(&mut tx_id);
            rng.fill_bytes(&mut tag);
            SecureEnvelope {
                key_id,
                nonce,
                tx_id,
                confidential: true,
                ciphertext: encoded,
                tag,
            }
            .encode()
        }
    };
    encode_frame(&payload).expect("forged frames are small")
}

pub fn frame_hash(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Frames an attack placed on the wire.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Injection {
    /// `(claimed sender, bytes)` in injection order.
    pub frames: Vec<(NodeId, Vec<u8>)>,
    pub replayed_hashes: Vec<[u8; 32]>,
}

/// Re-injects captured frames addressed to the script's target.
pub fn replay_last(cluster: &mut SimCluster, tap: TapId, script: &AttackScript) -> Result<Injection, AttackError> {
    let AttackScript::ReplayLast {
        count,
        delay,
        target,
        filter,
        pick,
    } = script
    else {
        return Ok(Injection::default());
    };
    if *count == 0 {
        return Ok(Injection::default());
    }
    let filter = CaptureFilter {
        to: Some(*target),
        ..filter.clone()
    };
    let capture = cluster.network().tap(tap);
    let chosen: Vec<CapturedFrame> = match pick {
        Pick::Newest => capture
            .last_matching(*count, |f| filter.matches(f))
            .into_iter()
            .cloned()
            .collect(),
        Pick::Oldest => capture
            .frames()
            .iter()
            .filter(|f| filter.matches(f))
            .take(*count)
            .cloned()
            .collect(),
    };
    if chosen.is_empty() {
        return Err(AttackError::EmptyCapture);
    }
    let mut injection = Injection::default();
    for frame in chosen {
        injection.replayed_hashes.push(frame_hash(&frame.bytes));
        cluster.inject(frame.from, *target, frame.bytes.clone(), *delay);
        injection.frames.push((frame.from, frame.bytes));
    }
    Ok(injection)
}

/// Forges and injects an AppendEntries, inferring the target's log position
/// and the wire style from whatever the tap has seen.
pub fn entry_attack<R: RngCore + ?Sized>(
    cluster: &mut SimCluster,
    tap: TapId,
    script: &AttackScript,
    rng: &mut R,
) -> Result<Injection, AttackError> {
    let AttackScript::EntryAttack {
        forged,
        target,
        impersonate,
    } = script
    else {
        return Ok(Injection::default());
    };
    let capture = cluster.network().tap(tap);
    let style = infer_style(capture.frames().iter().map(|f| f.bytes.as_slice()));
    let (prev_index, prev_term, _) =
        infer_log_position(capture.frames().iter().map(|f| (f.bytes.as_slice(), f.to)), *target);
    let msg = forged_append(forged, *impersonate, prev_index, prev_term);
    let bytes = forge_frame(&msg, style, rng);
    cluster.inject(*impersonate, *target, bytes.clone(), MILLI);
    Ok(Injection {
        frames: vec![(*impersonate, bytes)],
        replayed_hashes: Vec::new(),
    })
}

/// Committed-log comparison across a quiescent cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivergenceReport {
    pub digests: BTreeMap<NodeId, String>,
    pub commit_indices: BTreeMap<NodeId, u64>,
    /// Every pair of nodes has the same committed digest.
    pub consistent: bool,
    /// Committed indices whose command was committed more often than any
    /// client ever sent it.
    pub untraceable: Vec<u64>,
}

pub fn verify_consistency(cluster: &SimCluster) -> DivergenceReport {
    let members = cluster.members();
    let digests: BTreeMap<NodeId, String> = members
        .iter()
        .map(|id| (*id, cluster.committed_digest(*id)))
        .collect();
    let commit_indices = members
        .iter()
        .map(|id| (*id, cluster.node(*id).commit_index()))
        .collect();
    let consistent = digests.values().all(|d| Some(d) == digests.values().next());
    let longest = members
        .iter()
        .map(|id| cluster.node(*id).committed())
        .max_by_key(|c| c.len())
        .unwrap_or(&[]);
    let mut used: BTreeMap<&[u8], u64> = BTreeMap::new();
    let mut untraceable = Vec::new();
    for entry in longest {
        let count = used.entry(entry.command.as_slice()).or_default();
        *count += 1;
        let submitted = cluster.submissions().get(&entry.command).copied().unwrap_or(0);
        if *count > submitted {
            untraceable.push(entry.index);
        }
    }
    DivergenceReport {
        digests,
        commit_indices,
        consistent,
        untraceable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    ReplayLast,
    EntryAttack,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::ReplayLast => "replaylast",
            AttackKind::EntryAttack => "entryattack",
        })
    }
}

/// A node named by its role at the moment the attack starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role2Target {
    Leader,
    /// The k-th follower in id order, wrapping.
    Follower(usize),
    Node(NodeId),
}

impl Role2Target {
    fn resolve(self, cluster: &SimCluster) -> NodeId {
        let leader = cluster.leader();
        match self {
            Role2Target::Node(id) => id,
            Role2Target::Leader => leader.expect("warm-up elected a leader"),
            Role2Target::Follower(k) => {
                let followers: Vec<NodeId> = cluster
                    .members()
                    .iter()
                    .copied()
                    .filter(|m| Some(*m) != leader)
                    .collect();
                followers[k % followers.len()]
            }
        }
    }
}

/// Attack script with role-relative endpoints, resolved after warm-up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannedAttack {
    ReplayLast {
        count: usize,
        delay: Micros,
        target: Role2Target,
        /// Restrict to frames sent by this endpoint.
        from: Option<Role2Target>,
        /// Restrict to frames sent by the first client.
        from_client: bool,
        kind: Option<MessageKind>,
        pick: Pick,
    },
    EntryAttack {
        target: Role2Target,
        impersonate: Role2Target,
        /// Forged term relative to the highest term the attacker observed;
        /// negative values forge a stale term.
        term_offset: i64,
        /// Absolute forged term, overriding the offset.
        term: Option<Term>,
        command: Vec<u8>,
    },
}

#[derive(Debug, Clone)]
pub struct AttackPlan {
    pub mode: TransportMode,
    pub seed: u64,
    pub nodes: u64,
    pub attack: PlannedAttack,
    pub warmup_commands: usize,
    pub post_commands: usize,
}

impl AttackPlan {
    pub fn kind(&self) -> AttackKind {
        match self.attack {
            PlannedAttack::ReplayLast { .. } => AttackKind::ReplayLast,
            PlannedAttack::EntryAttack { .. } => AttackKind::EntryAttack,
        }
    }

    /// The seeded scenario family used by the attack campaign. Scripts vary
    /// with the seed but never with the mode.
    pub fn campaign(kind: AttackKind, mode: TransportMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa77a_c4);
        let attack = match kind {
            AttackKind::ReplayLast => {
                let count = rng.gen_range(1..=3);
                let delay = rng.gen_range(5..60) * MILLI;
                match seed % 3 {
                    // client writes replayed at the leader
                    0 => PlannedAttack::ReplayLast {
                        count,
                        delay,
                        target: Role2Target::Leader,
                        from: None,
                        from_client: true,
                        kind: None,
                        pick: Pick::Newest,
                    },
                    // recent replication traffic replayed at a follower
                    1 => PlannedAttack::ReplayLast {
                        count,
                        delay,
                        target: Role2Target::Follower(rng.gen_range(0..2)),
                        from: Some(Role2Target::Leader),
                        from_client: false,
                        kind: None,
                        pick: Pick::Newest,
                    },
                    // the election-time RequestVote replayed at a follower
                    _ => PlannedAttack::ReplayLast {
                        count: 1,
                        delay,
                        target: Role2Target::Follower(rng.gen_range(0..2)),
                        from: Some(Role2Target::Leader),
                        from_client: false,
                        kind: None,
                        pick: Pick::Oldest,
                    },
                }
            }
            AttackKind::EntryAttack => {
                let target = Role2Target::Follower(rng.gen_range(0..2));
                let impersonate = if rng.gen_bool(0.5) {
                    Role2Target::Leader
                } else {
                    Role2Target::Follower(rng.gen_range(0..2))
                };
                PlannedAttack::EntryAttack {
                    target,
                    impersonate,
                    term_offset: rng.gen_range(1..=5),
                    term: None,
                    command: KvCommand::Set {
                        key: b"forged".to_vec(),
                        value: format!("evil-{seed}").into_bytes(),
                    }
                    .encode(),
                }
            }
        };
        AttackPlan {
            mode,
            seed,
            nodes: 3,
            attack,
            warmup_commands: 10,
            post_commands: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub mode: TransportMode,
    pub seed: u64,
    pub script: Option<AttackScript>,
    pub frames_injected: u64,
    /// Injected frames that passed the transport and reached the protocol.
    pub frames_accepted: u64,
    pub frames_rejected: BTreeMap<&'static str, u64>,
    /// Frames nodes sent while handling accepted injected frames.
    pub responses_triggered: u64,
    pub consensus_compromised: bool,
    pub divergence: DivergenceReport,
    /// Leader elections beyond those of the attack-free run of the same seed.
    pub spurious_elections: u64,
    pub legit_delivered: u64,
    pub baseline_legit_delivered: u64,
    /// Replayed frames arrived byte-identical to their captures.
    pub byte_fidelity: bool,
}

impl AttackOutcome {
    pub fn frames_rejected_total(&self) -> u64 {
        self.frames_rejected.values().sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("attack {}\n", self.kind));
        out.push_str(&format!("mode {}\n", self.mode));
        out.push_str(&format!("seed {}\n", self.seed));
        if let Some(script) = &self.script {
            out.push_str(&format!("target {}\n", script.target()));
        }
        out.push_str(&format!("frames_injected {}\n", self.frames_injected));
        out.push_str(&format!("frames_accepted {}\n", self.frames_accepted));
        out.push_str(&format!("frames_rejected {}\n", self.frames_rejected_total()));
        for (reason, n) in &self.frames_rejected {
            out.push_str(&format!("frames_rejected.{reason} {n}\n"));
        }
        out.push_str(&format!("responses_triggered {}\n", self.responses_triggered));
        out.push_str(&format!("spurious_elections {}\n", self.spurious_elections));
        out.push_str(&format!("logs_consistent {}\n", self.divergence.consistent));
        out.push_str(&format!("untraceable_entries {}\n", self.divergence.untraceable.len()));
        for (id, digest) in &self.divergence.digests {
            out.push_str(&format!(
                "digest.{id} {} commit_index={}\n",
                digest, self.divergence.commit_indices[id]
            ));
        }
        out.push_str(&format!("legit_delivered {}\n", self.legit_delivered));
        out.push_str(&format!("baseline_legit_delivered {}\n", self.baseline_legit_delivered));
        out.push_str(&format!("byte_fidelity {}\n", self.byte_fidelity));
        out.push_str(&format!("consensus_compromised {}\n", self.consensus_compromised));
        out
    }
}

struct PhaseResult {
    cluster: SimCluster,
    attack_start: Micros,
    script: Option<AttackScript>,
    injection: Injection,
    tap: TapId,
}

fn run_phases(plan: &AttackPlan, attack: bool) -> Result<PhaseResult, AttackError> {
    let mut cluster = SimCluster::new(SimConfig::new(plan.nodes, plan.mode, plan.seed));
    let tap = cluster.network_mut().add_tap(None);
    cluster.run_until_leader(10 * SECOND).ok_or(AttackError::NoLeader)?;
    cluster.submit(0, (0..plan.warmup_commands).map(|i| set_command("pre", i, 16)));
    cluster.run_until_idle(60 * SECOND);
    cluster.run_for(100 * MILLI);
    if cluster.leader().is_none() {
        return Err(AttackError::NoLeader);
    }

    let attack_start = cluster.now();
    let capture = cluster.network().tap(tap);
    let (_, _, highest) = infer_log_position(
        capture.frames().iter().map(|f| (f.bytes.as_slice(), f.to)),
        NodeId(0),
    );
    let script = resolve(&plan.attack, &cluster, highest)?;
    let mut injection = Injection::default();
    if attack {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0xbad_c0de);
        injection = match &script {
            AttackScript::ReplayLast { .. } => replay_last(&mut cluster, tap, &script)?,
            AttackScript::EntryAttack { .. } => entry_attack(&mut cluster, tap, &script, &mut rng)?,
        };
    }

    cluster.run_for(200 * MILLI);
    cluster.submit(0, (0..plan.post_commands).map(|i| set_command("post", i, 16)));
    cluster.run_until_idle(cluster.now() + 60 * SECOND);
    cluster.run_for(500 * MILLI);
    Ok(PhaseResult {
        cluster,
        attack_start,
        script: Some(script),
        injection,
        tap,
    })
}

fn resolve(planned: &PlannedAttack, cluster: &SimCluster, highest: Term) -> Result<AttackScript, AttackError> {
    let check = |id: NodeId| {
        if cluster.members().contains(&id) {
            Ok(id)
        } else {
            Err(AttackError::UnknownTarget(id))
        }
    };
    Ok(match planned {
        PlannedAttack::ReplayLast {
            count,
            delay,
            target,
            from,
            from_client,
            kind,
            pick,
        } => AttackScript::ReplayLast {
            count: *count,
            delay: *delay,
            target: check(target.resolve(cluster))?,
            filter: CaptureFilter {
                from: if *from_client {
                    Some(NodeId::client(0))
                } else {
                    from.map(|f| f.resolve(cluster))
                },
                kind: *kind,
                ..CaptureFilter::default()
            },
            pick: *pick,
        },
        PlannedAttack::EntryAttack {
            target,
            impersonate,
            term_offset,
            term,
            command,
        } => {
            let term = term.unwrap_or_else(|| Term((highest.0 as i64 + term_offset).max(0) as u64));
            AttackScript::EntryAttack {
                forged: ForgedEntry {
                    term,
                    command: command.clone(),
                },
                target: check(target.resolve(cluster))?,
                impersonate: impersonate.resolve(cluster),
            }
        }
    })
}

/// Runs the plan twice, with and without the attack, and compares.
pub fn run_attack(plan: &AttackPlan) -> Result<AttackOutcome, AttackError> {
    let attacked = run_phases(plan, true)?;
    let baseline = run_phases(plan, false)?;
    let cluster = &attacked.cluster;

    let stats = cluster.injections();
    let arrived_hashes: Vec<[u8; 32]> = cluster
        .network()
        .tap(attacked.tap)
        .frames()
        .iter()
        .filter(|f| f.injected)
        .map(|f| frame_hash(&f.bytes))
        .collect();
    let byte_fidelity = attacked.injection.replayed_hashes.is_empty()
        || arrived_hashes == attacked.injection.replayed_hashes;

    let elections_after = |c: &SimCluster| {
        c.elections()
            .iter()
            .filter(|e| e.time >= attacked.attack_start)
            .count() as u64
    };
    let spurious_elections =
        elections_after(cluster).saturating_sub(elections_after(&baseline.cluster));
    let divergence = verify_consistency(cluster);
    let consensus_compromised =
        !divergence.consistent || !divergence.untraceable.is_empty() || spurious_elections > 0;

    Ok(AttackOutcome {
        kind: plan.kind(),
        mode: plan.mode,
        seed: plan.seed,
        script: attacked.script.clone(),
        frames_injected: attacked.injection.frames.len() as u64,
        frames_accepted: stats.accepted,
        frames_rejected: stats.rejected.clone(),
        responses_triggered: stats.responses_triggered,
        consensus_compromised,
        divergence,
        spurious_elections,
        legit_delivered: cluster.legit_accepted(),
        baseline_legit_delivered: baseline.cluster.legit_accepted(),
        byte_fidelity,
    })
}

/// Counters of one node before and after a live attack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveAttackReport {
    pub kind: AttackKind,
    pub target: NodeId,
    pub frames_injected: u64,
    pub before: BTreeMap<String, u64>,
    pub after: BTreeMap<String, u64>,
}

impl LiveAttackReport {
    fn delta(&self, name: &str) -> u64 {
        let get = |m: &BTreeMap<String, u64>| m.get(name).copied().unwrap_or(0);
        get(&self.after).saturating_sub(get(&self.before))
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "attack {}\nmode live\ntarget {}\nframes_injected {}\n",
            self.kind, self.target, self.frames_injected
        );
        for name in self.after.keys() {
            out.push_str(&format!("delta.{name} {}\n", self.delta(name)));
        }
        out
    }
}

fn parse_metrics(text: &str) -> BTreeMap<String, u64> {
    text.lines()
        .filter_map(|l| {
            let (k, v) = l.split_once(' ')?;
            Some((k.to_string(), v.trim().parse().ok()?))
        })
        .collect()
}

fn live_target(config: &ClusterConfig, target: NodeId) -> Result<String, LiveError> {
    config
        .address_of(target)
        .map(str::to_string)
        .ok_or_else(|| LiveError::Setup(format!("node {target} is not in the config")))
}

fn live_capture(config: &ClusterConfig) -> Result<Vec<(NodeId, NodeId, Vec<u8>)>, LiveError> {
    let path = config
        .tap_file
        .as_ref()
        .ok_or_else(|| LiveError::Setup("live attacks need `tap_file` in the config".into()))?;
    read_tap_file(path)
}

/// Replays the `count` newest frames the target received, verbatim, each
/// on a connection claiming the original sender.
pub fn live_replay_last(
    config: &ClusterConfig,
    count: usize,
    delay: std::time::Duration,
    target: NodeId,
) -> Result<LiveAttackReport, LiveError> {
    let addr = live_target(config, target)?;
    let capture = live_capture(config)?;
    let mut picked: Vec<(NodeId, Vec<u8>)> = capture
        .into_iter()
        .filter(|(from, to, _)| *to == target && !from.is_client())
        .map(|(from, _, bytes)| (from, bytes))
        .collect();
    picked.drain(..picked.len().saturating_sub(count));
    let before = parse_metrics(&query_metrics(&addr)?);
    std::thread::sleep(delay);
    for (from, bytes) in &picked {
        inject_frames(&addr, *from, std::slice::from_ref(bytes))?;
    }
    std::thread::sleep(std::time::Duration::from_millis(300));
    let after = parse_metrics(&query_metrics(&addr)?);
    Ok(LiveAttackReport {
        kind: AttackKind::ReplayLast,
        target,
        frames_injected: picked.len() as u64,
        before,
        after,
    })
}

/// Sends one forged AppendEntries to `target` claiming to be `impersonate`.
/// The wire style and log position are inferred from the tap file.
pub fn live_entry_attack(
    config: &ClusterConfig,
    target: NodeId,
    impersonate: NodeId,
    term: Option<Term>,
    command: Vec<u8>,
) -> Result<LiveAttackReport, LiveError> {
    let addr = live_target(config, target)?;
    let capture = live_capture(config)?;
    let style = infer_style(capture.iter().map(|(_, _, b)| b.as_slice()));
    let (index, prev_term, highest) =
        infer_log_position(capture.iter().map(|(_, to, b)| (b.as_slice(), *to)), target);
    let forged = ForgedEntry {
        term: term.unwrap_or(Term(highest.0 + 1)),
        command,
    };
    let msg = forged_append(&forged, impersonate, index, prev_term);
    let frame = forge_frame(&msg, style, &mut rand::thread_rng());
    let before = parse_metrics(&query_metrics(&addr)?);
    inject_frames(&addr, impersonate, &[frame])?;
    std::thread::sleep(std::time::Duration::from_millis(300));
    let after = parse_metrics(&query_metrics(&addr)?);
    Ok(LiveAttackReport {
        kind: AttackKind::EntryAttack,
        target,
        frames_injected: 1,
        before,
        after,
    })
}
