use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes128Gcm, Aes256Gcm, Nonce as GcmNonce, Tag as GcmTag};
use rand::RngCore;

use super::cache::ReplayCache;
use super::kdf::derive_key;
use super::{
    Keyring, MasterKey, Nonce, OpenError, SealError, Tag, TxId, KEY_LEN, NONCE_LEN, TAG_LEN,
    TX_ID_LEN,
};

const MODE_AUTH_ONLY: u8 = 0x00;
const MODE_CONFIDENTIAL: u8 = 0x01;

/// Bytes an envelope adds on top of its ciphertext.
pub const ENVELOPE_OVERHEAD: usize = 1 + 4 + NONCE_LEN + TX_ID_LEN + 4 + TAG_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureEnvelope {
    pub key_id: u32,
    pub nonce: Nonce,
    pub tx_id: TxId,
    pub confidential: bool,
    /// Equal to the plaintext when `confidential` is false.
    pub ciphertext: Vec<u8>,
    pub tag: Tag,
}

impl SecureEnvelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_OVERHEAD + self.ciphertext.len());
        out.push(if self.confidential {
            MODE_CONFIDENTIAL
        } else {
            MODE_AUTH_ONLY
        });
        out.extend_from_slice(&self.key_id.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.tx_id);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, OpenError> {
        if bytes.len() < ENVELOPE_OVERHEAD {
            return Err(OpenError::Malformed);
        }
        let confidential = match bytes[0] {
            MODE_CONFIDENTIAL => true,
            MODE_AUTH_ONLY => false,
            _ => return Err(OpenError::Malformed),
        };
        let key_id = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
        let nonce: Nonce = bytes[5..17].try_into().unwrap();
        let tx_id: TxId = bytes[17..33].try_into().unwrap();
        let ct_len = u32::from_be_bytes(bytes[33..37].try_into().unwrap()) as usize;
        if bytes.len() != ENVELOPE_OVERHEAD + ct_len {
            return Err(OpenError::Malformed);
        }
        let ciphertext = bytes[37..37 + ct_len].to_vec();
        let tag: Tag = bytes[37 + ct_len..].try_into().unwrap();
        Ok(SecureEnvelope {
            key_id,
            nonce,
            tx_id,
            confidential,
            ciphertext,
            tag,
        })
    }
}

/// `key_id (u32 BE) ‖ nonce ‖ tx_id ‖ peer_id_len (u16 BE) ‖ peer_id`.
pub fn build_aad(key_id: u32, nonce: &Nonce, tx_id: &TxId, peer_id: &[u8]) -> Result<Vec<u8>, OpenError> {
    let peer_len = u16::try_from(peer_id.len()).map_err(|_| OpenError::Malformed)?;
    let mut aad = Vec::with_capacity(4 + NONCE_LEN + TX_ID_LEN + 2 + peer_id.len());
    aad.extend_from_slice(&key_id.to_be_bytes());
    aad.extend_from_slice(nonce);
    aad.extend_from_slice(tx_id);
    aad.extend_from_slice(&peer_len.to_be_bytes());
    aad.extend_from_slice(peer_id);
    Ok(aad)
}

/// Raw AES-GCM encryption with a caller-chosen key (16 or 32 bytes), nonce
/// and AAD. Returns ciphertext and detached tag.
pub fn gcm_encrypt_raw(
    key: &[u8],
    nonce: &Nonce,
    plaintext: &[u8],
    aad: &[u8],
) -> Result<(Vec<u8>, Tag), OpenError> {
    let mut buffer = plaintext.to_vec();
    let nonce = GcmNonce::from_slice(nonce);
    let tag = match key.len() {
        16 => Aes128Gcm::new_from_slice(key)
            .map_err(|_| OpenError::Malformed)?
            .encrypt_in_place_detached(nonce, aad, &mut buffer),
        32 => Aes256Gcm::new_from_slice(key)
            .map_err(|_| OpenError::Malformed)?
            .encrypt_in_place_detached(nonce, aad, &mut buffer),
        _ => return Err(OpenError::Malformed),
    }
    .map_err(|_| OpenError::Malformed)?;
    Ok((buffer, tag.into()))
}

fn gcm_decrypt(
    key: &[u8; KEY_LEN],
    nonce: &Nonce,
    ciphertext: &[u8],
    tag: &Tag,
    aad: &[u8],
) -> Result<Vec<u8>, OpenError> {
    let mut buffer = ciphertext.to_vec();
    Aes256Gcm::new(key.into())
        .decrypt_in_place_detached(
            GcmNonce::from_slice(nonce),
            aad,
            &mut buffer,
            GcmTag::from_slice(tag),
        )
        .map_err(|_| OpenError::AuthFailure)?;
    Ok(buffer)
}

fn gmac_input(aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let mut input = Vec::with_capacity(aad.len() + plaintext.len());
    input.extend_from_slice(aad);
    input.extend_from_slice(plaintext);
    input
}

/// Auth-only tag: AES-256-GCM over an empty message with `aad ‖ plaintext`
/// as associated data.
pub fn compute_tag(k_tx: &[u8; KEY_LEN], nonce: &Nonce, aad: &[u8], plaintext: &[u8]) -> Tag {
    let (_, tag) = gcm_encrypt_raw(k_tx, nonce, &[], &gmac_input(aad, plaintext))
        .expect("32-byte key is always valid");
    tag
}

fn verify_tag(
    k_tx: &[u8; KEY_LEN],
    nonce: &Nonce,
    aad: &[u8],
    plaintext: &[u8],
    tag: &Tag,
) -> Result<(), OpenError> {
    gcm_decrypt(k_tx, nonce, &[], tag, &gmac_input(aad, plaintext)).map(|_| ())
}

/// Seals with explicitly supplied per-message randomness.
pub fn seal_with_parts(
    plaintext: &[u8],
    confidential: bool,
    peer_id: &[u8],
    master: &MasterKey,
    nonce: Nonce,
    tx_id: TxId,
) -> Result<SecureEnvelope, SealError> {
    if plaintext.is_empty() {
        return Err(SealError::EmptyPlaintext);
    }
    if peer_id.is_empty() || peer_id.len() > u16::MAX as usize {
        return Err(SealError::BadPeerId);
    }
    let k_tx = derive_key(master.secret(), &nonce, peer_id).map_err(|_| SealError::BadPeerId)?;
    let aad = build_aad(master.key_id, &nonce, &tx_id, peer_id).map_err(|_| SealError::BadPeerId)?;
    let (ciphertext, tag) = if confidential {
        gcm_encrypt_raw(&k_tx, &nonce, plaintext, &aad).expect("32-byte key is always valid")
    } else {
        (plaintext.to_vec(), compute_tag(&k_tx, &nonce, &aad, plaintext))
    };
    Ok(SecureEnvelope {
        key_id: master.key_id,
        nonce,
        tx_id,
        confidential,
        ciphertext,
        tag,
    })
}

/// Wraps `plaintext` for transmission, drawing nonce and tx_id from `rng`.
/// `peer_id` is the sender's identity.
pub fn seal<R: RngCore + ?Sized>(
    plaintext: &[u8],
    confidential: bool,
    peer_id: &[u8],
    master: &MasterKey,
    rng: &mut R,
) -> Result<SecureEnvelope, SealError> {
    let mut nonce = [0u8; NONCE_LEN];
    let mut tx_id = [0u8; TX_ID_LEN];
    rng.fill_bytes(&mut nonce);
    rng.fill_bytes(&mut tx_id);
    seal_with_parts(plaintext, confidential, peer_id, master, nonce, tx_id)
}

/// Authenticates, then checks freshness, then records the message as seen.
pub fn open(
    envelope: &SecureEnvelope,
    sender_peer_id: &[u8],
    keyring: &Keyring,
    cache: &mut ReplayCache,
) -> Result<Vec<u8>, OpenError> {
    let master = keyring.get(envelope.key_id).ok_or(OpenError::UnknownKeyId)?;
    let k_tx = derive_key(master.secret(), &envelope.nonce, sender_peer_id)?;
    let aad = build_aad(envelope.key_id, &envelope.nonce, &envelope.tx_id, sender_peer_id)?;
    let plaintext = if envelope.confidential {
        gcm_decrypt(&k_tx, &envelope.nonce, &envelope.ciphertext, &envelope.tag, &aad)?
    } else {
        verify_tag(&k_tx, &envelope.nonce, &aad, &envelope.ciphertext, &envelope.tag)?;
        envelope.ciphertext.clone()
    };
    if cache.seen(sender_peer_id, &envelope.tx_id) {
        return Err(OpenError::ReplayDetected);
    }
    cache.remember(sender_peer_id, &envelope.tx_id);
    Ok(plaintext)
}
