//! Per-message authenticated transport.
//!
//! Every message gets a fresh 12-byte nonce and 16-byte transaction id. A
//! one-off key is derived from the shared master key with HKDF-SHA256
//! (salt = nonce, info = sender identity), and the payload is either
//! encrypted with AES-256-GCM or, in auth-only mode, covered by a GMAC tag.
//! Receivers authenticate first and only then consult the replay cache, so
//! unauthenticated traffic never touches cache state.
//!
//! Envelope wire layout (big-endian):
//!
//! ```text
//! mode (1) ‖ key_id (4) ‖ nonce (12) ‖ tx_id (16) ‖ ct_len (4) ‖ ciphertext ‖ tag (16)
//! ```
//!
//! `mode` is `0x01` for confidential envelopes and `0x00` for auth-only.
//! The peer id bound into the key and AAD is the *sender's* identity.

mod cache;
mod envelope;
mod kdf;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use cache::{CacheKey, CachePolicy, Clock, ManualClock, ReplayCache, SystemClock};
pub use envelope::{
    build_aad, compute_tag, gcm_encrypt_raw, open, seal, seal_with_parts, SecureEnvelope,
    ENVELOPE_OVERHEAD,
};
pub use kdf::{derive_key, hkdf_sha256};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TX_ID_LEN: usize = 16;
pub const TAG_LEN: usize = 16;

pub type Nonce = [u8; NONCE_LEN];
pub type TxId = [u8; TX_ID_LEN];
pub type Tag = [u8; TAG_LEN];

/// Versioned pre-shared master secret.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey {
    pub key_id: u32,
    secret: [u8; KEY_LEN],
}

impl MasterKey {
    pub fn new(key_id: u32, secret: [u8; KEY_LEN]) -> Self {
        MasterKey { key_id, secret }
    }

    /// Parses 64 hex characters.
    pub fn from_hex(key_id: u32, hex_str: &str) -> Result<Self, OpenError> {
        let bytes = hex::decode(hex_str.trim()).map_err(|_| OpenError::Malformed)?;
        let secret: [u8; KEY_LEN] = bytes.try_into().map_err(|_| OpenError::Malformed)?;
        Ok(MasterKey { key_id, secret })
    }

    pub fn secret(&self) -> &[u8; KEY_LEN] {
        &self.secret
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKey")
            .field("key_id", &self.key_id)
            .field("secret", &"<redacted>")
            .finish()
    }
}

/// Master keys indexed by `key_id`.
#[derive(Debug, Clone, Default)]
pub struct Keyring {
    keys: HashMap<u32, MasterKey>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: MasterKey) {
        self.keys.insert(key.key_id, key);
    }

    pub fn get(&self, key_id: u32) -> Option<&MasterKey> {
        self.keys.get(&key_id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl FromIterator<MasterKey> for Keyring {
    fn from_iter<T: IntoIterator<Item = MasterKey>>(iter: T) -> Self {
        let mut ring = Keyring::new();
        for key in iter {
            ring.insert(key);
        }
        ring
    }
}

/// Why an inbound envelope was refused. `AuthFailure` deliberately carries
/// no detail about what failed to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum OpenError {
    #[error("unknown key id")]
    UnknownKeyId,
    #[error("authentication failed")]
    AuthFailure,
    #[error("replay detected")]
    ReplayDetected,
    #[error("malformed envelope")]
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SealError {
    #[error("plaintext must not be empty")]
    EmptyPlaintext,
    #[error("peer id must be 1..=65535 bytes")]
    BadPeerId,
}
