//! Cryptographic primitives shared by every role: Ed25519 identity keys,
//! salted attribute commitments, PBKDF2 key derivation, AES-GCM payload
//! encryption and sealed-box key transport.

mod aead;
mod commitment;
mod kdf;
mod keys;
mod meter;
mod sealed;

pub use aead::{open_symmetric, open_symmetric_with_aad, seal_symmetric, seal_symmetric_with_aad, NONCE_LEN};
pub use commitment::{commit_attribute, Commitment, Salt, COMMITMENT_LEN, SALT_LEN};
pub use kdf::{derive_key, KdfParams, SymmetricKey, DEFAULT_ITERATIONS, DEFAULT_KEY_SIZE};
pub use keys::{generate_keypair, sign, verify, verify_encoded, KeyPair, PublicKey, Signature, ED25519};
pub use meter::{CryptoMeter, MeterSnapshot};
pub use sealed::{open_asymmetric, seal_asymmetric, MAX_SEALED_PAYLOAD};

use rand::rngs::OsRng;
use rand::RngCore;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("entropy source failure: {0}")]
    Entropy(String),
    #[error("authentication failed")]
    Authentication,
    #[error("asymmetric decryption failed")]
    Decryption,
    #[error("payload of {len} bytes exceeds the {max}-byte transport limit")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("unsupported key size {0}; expected 16 or 32")]
    UnsupportedKeySize(usize),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
}

/// Fills a fresh array from the operating system's CSPRNG.
pub fn random_bytes<const N: usize>() -> Result<[u8; N], CryptoError> {
    let mut out = [0u8; N];
    OsRng
        .try_fill_bytes(&mut out)
        .map_err(|e| CryptoError::Entropy(e.to_string()))?;
    Ok(out)
}
