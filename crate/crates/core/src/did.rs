use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

use crate::clock::Timestamp;
use crate::crypto::PublicKey;

pub const DID_METHOD: &str = "polaris";

/// `did:polaris:<uuid>`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    identifier: Uuid,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DidParseError {
    #[error("not a DID: {0:?}")]
    Syntax(String),
    #[error("unsupported DID method {0:?}")]
    UnsupportedMethod(String),
    #[error("identifier is not a UUID: {0:?}")]
    BadIdentifier(String),
}

impl Did {
    pub fn new_random() -> Self {
        Did { identifier: Uuid::new_v4() }
    }

    pub fn from_uuid(identifier: Uuid) -> Self {
        Did { identifier }
    }

    pub fn identifier(&self) -> Uuid {
        self.identifier
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{DID_METHOD}:{}", self.identifier.hyphenated())
    }
}

impl FromStr for Did {
    type Err = DidParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let (scheme, method, id) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(DidParseError::Syntax(s.to_string())),
        };
        if scheme != "did" || method.is_empty() || id.is_empty() {
            return Err(DidParseError::Syntax(s.to_string()));
        }
        if method != DID_METHOD {
            return Err(DidParseError::UnsupportedMethod(method.to_string()));
        }
        // Only the hyphenated form round-trips through Display.
        if id.len() != 36 {
            return Err(DidParseError::BadIdentifier(id.to_string()));
        }
        let identifier =
            Uuid::parse_str(id).map_err(|_| DidParseError::BadIdentifier(id.to_string()))?;
        if identifier.hyphenated().to_string() != id {
            return Err(DidParseError::BadIdentifier(id.to_string()));
        }
        Ok(Did { identifier })
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// The registry record binding a DID to its verification key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DidDocument {
    pub did: Did,
    pub public_key: PublicKey,
    pub algorithm: String,
    pub created_at: Timestamp,
    /// Holder-supplied identifier submitted at registration.
    pub uuid: String,
}
