//! Holder wallet: credentials with their plaintext claims and salts.
//!
//! On disk each credential lives in `<dir>/<credential_id>/` as `vc.json`,
//! `salts.json` (`{name: hex salt}`) and `claims.json` (`{name: value}`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use uuid::Uuid;

use crate::clock::Timestamp;
use crate::credential::{
    check_credential, CredentialStatus, IssuedCredential, SaltMap, VerifiableCredential,
};
use crate::crypto::commit_attribute;
use crate::did::Did;
use crate::vdr::{DidResolver, VdrError};

#[derive(Debug, thiserror::Error)]
pub enum WalletError {
    #[error("credential issued to {actual}, not to this wallet's holder {expected}")]
    WrongHolder { expected: Did, actual: Did },
    #[error("credential rejected: {0:?}")]
    Rejected(CredentialStatus),
    #[error("claims and salts do not reproduce the commitment for {0:?}")]
    Inconsistent(String),
    #[error(transparent)]
    Registry(#[from] VdrError),
    #[error("wallet i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("wallet file {path}: {reason}")]
    Format { path: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalletEntry {
    pub vc: VerifiableCredential,
    pub claims: BTreeMap<String, String>,
    pub salts: SaltMap,
}

#[derive(Clone, Debug)]
pub struct Wallet {
    holder_did: Did,
    entries: BTreeMap<Uuid, WalletEntry>,
}

impl Wallet {
    pub fn new(holder_did: Did) -> Self {
        Wallet { holder_did, entries: BTreeMap::new() }
    }

    pub fn holder_did(&self) -> &Did {
        &self.holder_did
    }

    /// Checks the issuer's signature via the registry and that every
    /// (claim, salt) pair reproduces its commitment before storing.
    pub fn accept(
        &mut self,
        issued: IssuedCredential,
        resolver: &dyn DidResolver,
        now: Timestamp,
    ) -> Result<Uuid, WalletError> {
        let meta = &issued.vc.metadata;
        if meta.holder_did != self.holder_did {
            return Err(WalletError::WrongHolder { expected: self.holder_did, actual: meta.holder_did });
        }
        match check_credential(&issued.vc, resolver, now)? {
            CredentialStatus::Valid => {}
            other => return Err(WalletError::Rejected(other)),
        }
        let claims: BTreeMap<String, String> =
            issued.claims.into_iter().map(|c| (c.name, c.value)).collect();
        let consistent = claims.len() == issued.vc.h_claims.len()
            && issued.salts.len() == claims.len();
        if !consistent {
            return Err(WalletError::Inconsistent("attribute sets differ".into()));
        }
        for (name, value) in &claims {
            let ok = match (issued.salts.get(name), issued.vc.h_claims.get(name)) {
                (Some(salt), Some(digest)) => {
                    commit_attribute(name, value, salt).ok().as_ref() == Some(digest)
                }
                _ => false,
            };
            if !ok {
                return Err(WalletError::Inconsistent(name.clone()));
            }
        }
        let id = issued.vc.id();
        self.entries.insert(id, WalletEntry { vc: issued.vc, claims, salts: issued.salts });
        Ok(id)
    }

    /// Stores without checks. Used when loading a trusted directory.
    pub fn insert_unchecked(&mut self, entry: WalletEntry) {
        self.entries.insert(entry.vc.id(), entry);
    }

    pub fn get(&self, id: &Uuid) -> Option<&WalletEntry> {
        self.entries.get(id)
    }

    pub fn credential_ids(&self) -> impl Iterator<Item = &Uuid> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), WalletError> {
        for (id, entry) in &self.entries {
            let sub = dir.join(id.to_string());
            fs::create_dir_all(&sub)?;
            write_json(&sub.join("vc.json"), &entry.vc)?;
            write_json(&sub.join("salts.json"), &entry.salts)?;
            write_json(&sub.join("claims.json"), &entry.claims)?;
        }
        Ok(())
    }

    pub fn load_dir(holder_did: Did, dir: &Path) -> Result<Self, WalletError> {
        let mut wallet = Wallet::new(holder_did);
        if !dir.exists() {
            return Ok(wallet);
        }
        for item in fs::read_dir(dir)? {
            let path = item?.path();
            if !path.join("vc.json").exists() {
                continue;
            }
            let vc: VerifiableCredential = read_json(&path.join("vc.json"))?;
            let salts: SaltMap = read_json(&path.join("salts.json"))?;
            let claims: BTreeMap<String, String> = read_json(&path.join("claims.json"))?;
            wallet.insert_unchecked(WalletEntry { vc, claims, salts });
        }
        Ok(wallet)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), WalletError> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| WalletError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, WalletError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| WalletError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
