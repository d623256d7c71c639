//! Anonymous sealed-box transport of short secrets to a DID key.
//!
//! The recipient's Ed25519 key is mapped to its X25519 (Montgomery) form, so
//! the key registered in the VDR doubles as the transport key.

use rand::rngs::OsRng;

use super::{CryptoError, KeyPair, PublicKey};

/// Upper bound on sealed payloads; large data travels under a symmetric key.
pub const MAX_SEALED_PAYLOAD: usize = 128;

pub fn seal_asymmetric(payload: &[u8], recipient: &PublicKey) -> Result<Vec<u8>, CryptoError> {
    if payload.len() > MAX_SEALED_PAYLOAD {
        return Err(CryptoError::PayloadTooLarge {
            len: payload.len(),
            max: MAX_SEALED_PAYLOAD,
        });
    }
    let montgomery = recipient.verifying_key().to_montgomery();
    let box_key = crypto_box::PublicKey::from_bytes(montgomery.to_bytes());
    box_key
        .seal(&mut OsRng, payload)
        .map_err(|_| CryptoError::InvalidInput("sealed box encryption failed".into()))
}

pub fn open_asymmetric(ciphertext: &[u8], recipient: &KeyPair) -> Result<Vec<u8>, CryptoError> {
    let secret = crypto_box::SecretKey::from_bytes(recipient.signing_key().to_scalar_bytes());
    secret.unseal(ciphertext).map_err(|_| CryptoError::Decryption)
}
