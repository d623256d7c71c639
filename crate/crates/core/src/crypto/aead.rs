use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Aes256Gcm, Nonce};

use super::{random_bytes, CryptoError, SymmetricKey};

pub const NONCE_LEN: usize = 12;

/// AES-GCM (128 or 256 by key length). Output is `nonce ‖ ciphertext ‖ tag`.
pub fn seal_symmetric(plaintext: &[u8], key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    seal_symmetric_with_aad(plaintext, &[], key)
}

pub fn open_symmetric(ciphertext: &[u8], key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    open_symmetric_with_aad(ciphertext, &[], key)
}

pub fn seal_symmetric_with_aad(
    plaintext: &[u8],
    aad: &[u8],
    key: &SymmetricKey,
) -> Result<Vec<u8>, CryptoError> {
    let nonce_bytes: [u8; NONCE_LEN] = random_bytes()?;
    let nonce = Nonce::from_slice(&nonce_bytes);
    let payload = Payload { msg: plaintext, aad };
    let sealed = match key.len() {
        32 => Aes256Gcm::new_from_slice(key.as_bytes())
            .map_err(|_| CryptoError::UnsupportedKeySize(key.len()))?
            .encrypt(nonce, payload),
        16 => Aes128Gcm::new_from_slice(key.as_bytes())
            .map_err(|_| CryptoError::UnsupportedKeySize(key.len()))?
            .encrypt(nonce, payload),
        other => return Err(CryptoError::UnsupportedKeySize(other)),
    }
    .map_err(|_| CryptoError::InvalidInput("plaintext too large for AES-GCM".into()))?;
    let mut out = Vec::with_capacity(NONCE_LEN + sealed.len());
    out.extend_from_slice(&nonce_bytes);
    out.extend_from_slice(&sealed);
    Ok(out)
}

pub fn open_symmetric_with_aad(
    ciphertext: &[u8],
    aad: &[u8],
    key: &SymmetricKey,
) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < NONCE_LEN + 16 {
        return Err(CryptoError::Authentication);
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    let nonce = Nonce::from_slice(nonce);
    let payload = Payload { msg: body, aad };
    match key.len() {
        32 => Aes256Gcm::new_from_slice(key.as_bytes())
            .map_err(|_| CryptoError::UnsupportedKeySize(key.len()))?
            .decrypt(nonce, payload),
        16 => Aes128Gcm::new_from_slice(key.as_bytes())
            .map_err(|_| CryptoError::UnsupportedKeySize(key.len()))?
            .decrypt(nonce, payload),
        other => return Err(CryptoError::UnsupportedKeySize(other)),
    }
    .map_err(|_| CryptoError::Authentication)
}
