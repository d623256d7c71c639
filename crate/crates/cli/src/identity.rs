//! Identity files: one Ed25519 key pair, plus the DID once registered.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use polaris_core::codec::{b64_decode, b64_encode};
use polaris_core::crypto::{generate_keypair, KeyPair, ED25519};
use polaris_core::did::Did;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct IdentityFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    did: Option<Did>,
    algorithm: String,
    public_key: String,
    private_key: String,
}

pub struct Identity {
    pub did: Option<Did>,
    pub key: KeyPair,
}

impl Identity {
    pub fn generate() -> Self {
        Identity { did: None, key: generate_keypair() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).with_context(|| format!("reading identity {}", path.display()))?;
        let file: IdentityFile =
            serde_json::from_slice(&text).with_context(|| format!("parsing identity {}", path.display()))?;
        if file.algorithm != ED25519 {
            return Err(anyhow!("unsupported key algorithm {}", file.algorithm));
        }
        let key = KeyPair::from_private_bytes(&b64_decode(&file.private_key)?)?;
        if b64_encode(&key.public_key().to_bytes()) != file.public_key {
            return Err(anyhow!("{}: public key does not match the private key", path.display()));
        }
        Ok(Identity { did: file.did, key })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = IdentityFile {
            did: self.did,
            algorithm: ED25519.to_string(),
            public_key: b64_encode(&self.key.public_key().to_bytes()),
            private_key: b64_encode(&self.key.private_key_bytes()),
        };
        let mut text = serde_json::to_vec_pretty(&file)?;
        text.push(b'\n');
        std::fs::write(path, text).with_context(|| format!("writing identity {}", path.display()))
    }

    /// The registered DID; errors for identities not yet registered.
    pub fn did(&self) -> Result<Did> {
        self.did.ok_or_else(|| anyhow!("identity has no DID yet; run `polaris register` first"))
    }
}
