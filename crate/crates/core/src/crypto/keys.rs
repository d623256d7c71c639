use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CryptoError;
use crate::codec::{b64_decode, b64_encode};

/// Algorithm tag carried next to every public key.
pub const ED25519: &str = "Ed25519";

/// An Ed25519 verification key. Construction validates the point encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| {
            CryptoError::InvalidInput(format!("public key must be 32 bytes, got {}", bytes.len()))
        })?;
        VerifyingKey::from_bytes(&arr)
            .map(PublicKey)
            .map_err(|_| CryptoError::InvalidInput("public key is not a valid curve point".into()))
    }

    pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
        let bytes = b64_decode(text).map_err(|e| CryptoError::InvalidInput(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn algorithm(&self) -> &'static str {
        ED25519
    }

    pub(crate) fn verifying_key(&self) -> &VerifyingKey {
        &self.0
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", b64_encode(&self.to_bytes()))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64_encode(&self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        PublicKey::from_base64(&text).map_err(serde::de::Error::custom)
    }
}

/// A signing key pair. The public half is always derived from the private half.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_private_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| {
            CryptoError::InvalidInput(format!("private key must be 32 bytes, got {}", bytes.len()))
        })?;
        Ok(KeyPair {
            signing: SigningKey::from_bytes(&arr),
        })
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key())
    }

    pub fn private_key_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn algorithm(&self) -> &'static str {
        ED25519
    }

    pub(crate) fn signing_key(&self) -> &SigningKey {
        &self.signing
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key())
            .finish_non_exhaustive()
    }
}

pub fn generate_keypair() -> KeyPair {
    KeyPair {
        signing: SigningKey::generate(&mut OsRng),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; 64]);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 64] = bytes.try_into().map_err(|_| {
            CryptoError::InvalidInput(format!("signature must be 64 bytes, got {}", bytes.len()))
        })?;
        Ok(Signature(arr))
    }

    pub fn to_bytes(&self) -> [u8; 64] {
        self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; 64] {
        &mut self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", b64_encode(&self.0))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64_encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = b64_decode(&text).map_err(serde::de::Error::custom)?;
        Signature::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

pub fn sign(message: &[u8], key: &KeyPair) -> Signature {
    Signature(key.signing.sign(message).to_bytes())
}

/// Strict Ed25519 verification. A well-formed but wrong signature is `false`.
pub fn verify(message: &[u8], sig: &Signature, key: &PublicKey) -> bool {
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.0.verify_strict(message, &sig).is_ok()
}

/// Verification over raw encodings: malformed keys or signatures are an
/// error, not a `false` verdict.
pub fn verify_encoded(message: &[u8], sig: &[u8], key: &[u8]) -> Result<bool, CryptoError> {
    let key = PublicKey::from_bytes(key)?;
    let sig = Signature::from_bytes(sig)?;
    Ok(verify(message, &sig, &key))
}
