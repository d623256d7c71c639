use std::fmt;

use pbkdf2::pbkdf2_hmac;
use sha2::Sha256;

use super::CryptoError;
use crate::clock::Timestamp;

pub const DEFAULT_ITERATIONS: u32 = 10_000;
pub const DEFAULT_KEY_SIZE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KdfParams {
    pub key_size: usize,
    pub iterations: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams {
            key_size: DEFAULT_KEY_SIZE,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// Symmetric key material. Equality compares key bytes only.
#[derive(Clone)]
pub struct SymmetricKey {
    bytes: Vec<u8>,
    pub created_at: Timestamp,
}

impl SymmetricKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        check_key_size(bytes.len())?;
        Ok(SymmetricKey {
            bytes: bytes.to_vec(),
            created_at: Timestamp::now(),
        })
    }

    pub fn random(key_size: usize) -> Result<Self, CryptoError> {
        check_key_size(key_size)?;
        let raw: [u8; 32] = super::random_bytes()?;
        SymmetricKey::from_bytes(&raw[..key_size])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

impl PartialEq for SymmetricKey {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for SymmetricKey {}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricKey({} bytes)", self.bytes.len())
    }
}

fn check_key_size(size: usize) -> Result<(), CryptoError> {
    match size {
        16 | 32 => Ok(()),
        other => Err(CryptoError::UnsupportedKeySize(other)),
    }
}

/// PBKDF2-HMAC-SHA256.
pub fn derive_key(
    password: &[u8],
    salt: &[u8],
    key_size: usize,
    iterations: u32,
) -> Result<SymmetricKey, CryptoError> {
    check_key_size(key_size)?;
    if iterations == 0 {
        return Err(CryptoError::ZeroIterations);
    }
    let mut out = vec![0u8; key_size];
    pbkdf2_hmac::<Sha256>(password, salt, iterations, &mut out);
    Ok(SymmetricKey {
        bytes: out,
        created_at: Timestamp::now(),
    })
}
