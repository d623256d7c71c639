use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::{random_bytes, CryptoError};

pub const SALT_LEN: usize = 16;
pub const COMMITMENT_LEN: usize = 32;

/// Per-attribute blinding salt. Serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Salt([u8; SALT_LEN]);

impl Salt {
    pub fn random() -> Result<Self, CryptoError> {
        random_bytes().map(Salt)
    }

    pub fn from_bytes(bytes: [u8; SALT_LEN]) -> Self {
        Salt(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SALT_LEN] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; SALT_LEN] {
        &mut self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let mut out = [0u8; SALT_LEN];
        hex::decode_to_slice(text, &mut out)
            .map_err(|e| CryptoError::InvalidInput(format!("salt: {e}")))?;
        Ok(Salt(out))
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt({})", self.to_hex())
    }
}

impl Serialize for Salt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Salt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Salt::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 digest committing to one (name, value, salt) triple.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment([u8; COMMITMENT_LEN]);

impl Commitment {
    pub fn from_bytes(bytes: [u8; COMMITMENT_LEN]) -> Self {
        Commitment(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; COMMITMENT_LEN] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; COMMITMENT_LEN] {
        &mut self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let mut out = [0u8; COMMITMENT_LEN];
        hex::decode_to_slice(text, &mut out)
            .map_err(|e| CryptoError::InvalidInput(format!("commitment: {e}")))?;
        Ok(Commitment(out))
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

impl Serialize for Commitment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Commitment::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// `SHA-256(len(name) ‖ name ‖ len(value) ‖ value ‖ len(salt) ‖ salt)` with
/// 4-byte big-endian lengths, so no two field splits share a preimage.
pub fn commit_attribute(name: &str, value: &str, salt: &Salt) -> Result<Commitment, CryptoError> {
    if name.is_empty() {
        return Err(CryptoError::InvalidInput("attribute name must be nonempty".into()));
    }
    let mut hasher = Sha256::new();
    for field in [name.as_bytes(), value.as_bytes(), salt.as_bytes().as_slice()] {
        let len = u32::try_from(field.len())
            .map_err(|_| CryptoError::InvalidInput("commitment field exceeds 4 GiB".into()))?;
        hasher.update(len.to_be_bytes());
        hasher.update(field);
    }
    Ok(Commitment(hasher.finalize().into()))
}
