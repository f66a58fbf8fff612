use hkdf::Hkdf;
use sha2::Sha256;

use super::{OpenError, KEY_LEN, NONCE_LEN};

/// HKDF-SHA256 extract-then-expand into `out`.
pub fn hkdf_sha256(ikm: &[u8], salt: &[u8], info: &[u8], out: &mut [u8]) -> Result<(), OpenError> {
    Hkdf::<Sha256>::new(Some(salt), ikm)
        .expand(info, out)
        .map_err(|_| OpenError::Malformed)
}

/// Per-message key: HKDF-SHA256 with the master secret as input keying
/// material, the message nonce as salt and the peer id as info.
pub fn derive_key(master: &[u8], nonce: &[u8], peer_id: &[u8]) -> Result<[u8; KEY_LEN], OpenError> {
    if master.len() != KEY_LEN || nonce.len() != NONCE_LEN || peer_id.is_empty() {
        return Err(OpenError::Malformed);
    }
    let mut key = [0u8; KEY_LEN];
    hkdf_sha256(master, nonce, peer_id, &mut key)?;
    Ok(key)
}
