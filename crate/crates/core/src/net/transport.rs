use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::codec::{decode_message, encode_message, DecodeError};
use super::frame::{decode_frame, encode_frame, FrameError};
use crate::raft::{NodeId, RaftMessage};
use crate::secure::{open, seal, Keyring, MasterKey, OpenError, ReplayCache, SecureEnvelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportMode {
    /// Encoded messages travel as-is.
    Plaintext,
    /// Every payload is a sealed envelope checked against the replay cache.
    Secure,
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportMode::Plaintext => "plaintext",
            TransportMode::Secure => "secure",
        })
    }
}

impl FromStr for TransportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plaintext" | "plain" | "default" => Ok(TransportMode::Plaintext),
            "secure" => Ok(TransportMode::Secure),
            other => Err(format!("unknown transport mode `{other}`")),
        }
    }
}

/// Why an inbound frame produced no protocol event.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("framing: {0}")]
    Framing(#[from] FrameError),
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("envelope: {0}")]
    Open(#[from] OpenError),
}

impl Rejection {
    /// Stable metric-style name of the rejection reason.
    pub fn label(&self) -> &'static str {
        match self {
            Rejection::Framing(_) => "framing_error",
            Rejection::Decode(_) => "decode_error",
            Rejection::Open(OpenError::ReplayDetected) => "replay_detected",
            Rejection::Open(OpenError::AuthFailure) => "auth_failure",
            Rejection::Open(OpenError::UnknownKeyId) => "unknown_key_id",
            Rejection::Open(OpenError::Malformed) => "malformed",
        }
    }
}

/// Per-node transport counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMetrics {
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub frames_received: u64,
    pub delivered: u64,
    pub replay_detected: u64,
    pub auth_failure: u64,
    pub unknown_key_id: u64,
    pub malformed: u64,
    pub decode_errors: u64,
    pub framing_errors: u64,
}

impl NodeMetrics {
    pub fn rejected(&self) -> u64 {
        self.replay_detected
            + self.auth_failure
            + self.unknown_key_id
            + self.malformed
            + self.decode_errors
            + self.framing_errors
    }

    fn count(&mut self, rejection: &Rejection) {
        match rejection {
            Rejection::Framing(_) => self.framing_errors += 1,
            Rejection::Decode(_) => self.decode_errors += 1,
            Rejection::Open(OpenError::ReplayDetected) => self.replay_detected += 1,
            Rejection::Open(OpenError::AuthFailure) => self.auth_failure += 1,
            Rejection::Open(OpenError::UnknownKeyId) => self.unknown_key_id += 1,
            Rejection::Open(OpenError::Malformed) => self.malformed += 1,
        }
    }

    pub fn entries(&self) -> [(&'static str, u64); 10] {
        [
            ("frames_sent", self.frames_sent),
            ("bytes_sent", self.bytes_sent),
            ("frames_received", self.frames_received),
            ("delivered", self.delivered),
            ("replay_detected", self.replay_detected),
            ("auth_failure", self.auth_failure),
            ("unknown_key_id", self.unknown_key_id),
            ("malformed", self.malformed),
            ("decode_errors", self.decode_errors),
            ("framing_errors", self.framing_errors),
        ]
    }

    /// `name value` lines.
    pub fn render(&self) -> String {
        self.entries()
            .iter()
            .map(|(name, value)| format!("{name} {value}\n"))
            .collect()
    }
}

struct SecureState {
    keyring: Keyring,
    active: MasterKey,
    cache: ReplayCache,
    rng: ChaCha20Rng,
    confidential: bool,
}

/// One endpoint's view of the wire: turns messages into frames and frames
/// back into messages, applying the configured protection.
pub struct Transport {
    id: NodeId,
    peer_id: Vec<u8>,
    secure: Option<SecureState>,
    metrics: NodeMetrics,
}

impl fmt::Debug for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transport")
            .field("id", &self.id)
            .field("mode", &self.mode())
            .field("metrics", &self.metrics)
            .finish()
    }
}

impl Transport {
    pub fn plaintext(id: NodeId) -> Self {
        Transport {
            id,
            peer_id: id.peer_id(),
            secure: None,
            metrics: NodeMetrics::default(),
        }
    }

    /// `seed` makes envelope randomness reproducible; `None` draws from the
    /// OS generator.
    pub fn secure(
        id: NodeId,
        keyring: Keyring,
        active: MasterKey,
        cache: ReplayCache,
        seed: Option<u64>,
        confidential: bool,
    ) -> Self {
        let rng = match seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_rng(rand::thread_rng()).expect("thread rng"),
        };
        Transport {
            id,
            peer_id: id.peer_id(),
            secure: Some(SecureState {
                keyring,
                active,
                cache,
                rng,
                confidential,
            }),
            metrics: NodeMetrics::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn mode(&self) -> TransportMode {
        if self.secure.is_some() {
            TransportMode::Secure
        } else {
            TransportMode::Plaintext
        }
    }

    pub fn metrics(&self) -> &NodeMetrics {
        &self.metrics
    }

    pub fn replay_cache(&self) -> Option<&ReplayCache> {
        self.secure.as_ref().map(|s| &s.cache)
    }

    /// Produces the complete frame for `msg`.
    pub fn outbound(&mut self, msg: &RaftMessage) -> Vec<u8> {
        let encoded = encode_message(msg);
        let payload = match &mut self.secure {
            None => encoded,
            Some(s) => seal(&encoded, s.confidential, &self.peer_id, &s.active, &mut s.rng)
                .expect("encoded messages are never empty")
                .encode(),
        };
        let frame = encode_frame(&payload).expect("raft messages stay under the frame limit");
        self.metrics.frames_sent += 1;
        self.metrics.bytes_sent += frame.len() as u64;
        frame
    }

    /// Validates one frame claimed to come from `from`.
    pub fn inbound(&mut self, from: NodeId, frame: &[u8]) -> Result<RaftMessage, Rejection> {
        self.metrics.frames_received += 1;
        let result = self.unwrap_frame(from, frame);
        match &result {
            Ok(_) => self.metrics.delivered += 1,
            Err(rejection) => self.metrics.count(rejection),
        }
        result
    }

    fn unwrap_frame(&mut self, from: NodeId, frame: &[u8]) -> Result<RaftMessage, Rejection> {
        let payload = decode_frame(frame)?;
        match &mut self.secure {
            None => Ok(decode_message(payload)?),
            Some(s) => {
                let envelope = SecureEnvelope::decode(payload)?;
                let plaintext = open(&envelope, &from.peer_id(), &s.keyring, &mut s.cache)?;
                Ok(decode_message(&plaintext)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::codec::encode_message;
    use crate::raft::Term;
    use crate::secure::CachePolicy;

    fn key() -> MasterKey {
        MasterKey::new(1, [3; 32])
    }

    fn secure(id: u64, seed: u64) -> Transport {
        Transport::secure(
            NodeId(id),
            [key()].into_iter().collect(),
            key(),
            ReplayCache::new(CachePolicy::default()),
            Some(seed),
            true,
        )
    }

    fn vote() -> RaftMessage {
        RaftMessage::RequestVote {
            term: Term(4),
            candidate_id: NodeId(1),
            last_log_index: 9,
            last_log_term: Term(3),
        }
    }

    #[test]
    fn secure_frames_hide_the_encoding() {
        let mut a = secure(1, 1);
        let mut b = secure(2, 2);
        let frame = a.outbound(&vote());
        let encoded = encode_message(&vote());
        assert!(!frame.windows(encoded.len()).any(|w| w == encoded));
        assert_eq!(b.inbound(NodeId(1), &frame).unwrap(), vote());
        assert_eq!(b.metrics().delivered, 1);
    }

    #[test]
    fn replayed_frame_counts_as_replay() {
        let mut a = secure(1, 1);
        let mut b = secure(2, 2);
        let frame = a.outbound(&vote());
        b.inbound(NodeId(1), &frame).unwrap();
        assert_eq!(
            b.inbound(NodeId(1), &frame),
            Err(Rejection::Open(OpenError::ReplayDetected))
        );
        assert_eq!(b.metrics().replay_detected, 1);
        assert_eq!(b.metrics().delivered, 1);
    }

    #[test]
    fn plaintext_frames_carry_raw_encoding() {
        let mut a = Transport::plaintext(NodeId(1));
        let mut b = Transport::plaintext(NodeId(2));
        let frame = a.outbound(&vote());
        assert_eq!(&frame[4..], &encode_message(&vote())[..]);
        assert_eq!(b.inbound(NodeId(1), &frame).unwrap(), vote());
        // replays are indistinguishable in plaintext mode
        assert_eq!(b.inbound(NodeId(1), &frame).unwrap(), vote());
        assert_eq!(b.inbound(NodeId(1), &frame[..3]), Err(Rejection::Framing(FrameError::Truncated)));
        assert_eq!(b.metrics().framing_errors, 1);
    }

    #[test]
    fn forged_tag_counts_as_auth_failure() {
        let mut a = secure(1, 1);
        let mut b = secure(2, 2);
        let mut frame = a.outbound(&vote());
        let last = frame.len() - 1;
        frame[last] ^= 0x55;
        assert_eq!(b.inbound(NodeId(1), &frame), Err(Rejection::Open(OpenError::AuthFailure)));
        assert_eq!(b.metrics().auth_failure, 1);
        assert!(b.metrics().render().contains("auth_failure 1\n"));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Secure".parse::<TransportMode>().unwrap(), TransportMode::Secure);
        assert_eq!("plaintext".parse::<TransportMode>().unwrap(), TransportMode::Plaintext);
        assert!("tls".parse::<TransportMode>().is_err());
    }
}
