//! Verifiable Data Registry: mints `did:polaris` identifiers, stores their
//! documents and resolves them for any party.

mod client;
mod store;

pub use client::VdrClient;
pub use store::{DidStore, JournalStore, MemoryStore, StoreError};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::{system_clock, SharedClock};
use crate::codec::{b64_decode, from_json};
use crate::crypto::{PublicKey, ED25519};
use crate::did::{Did, DidDocument, DidParseError};
use crate::wire::{Handler, Method, WireRequest, WireResponse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VdrError {
    #[error("{0} is not registered")]
    NotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("store failure: {0}")]
    Store(String),
    #[error("registry unreachable: {0}")]
    Transport(String),
}

impl From<DidParseError> for VdrError {
    fn from(e: DidParseError) -> Self {
        VdrError::InvalidInput(e.to_string())
    }
}

/// Read side of the registry, implemented by the embedded registry and the
/// wire client alike.
pub trait DidResolver: Send + Sync {
    fn resolve_did(&self, did: &Did) -> Result<DidDocument, VdrError>;

    fn resolve_key(&self, did: &Did) -> Result<PublicKey, VdrError> {
        self.resolve_did(did).map(|doc| doc.public_key)
    }
}

pub trait DidRegistrar: Send + Sync {
    fn register_did(&self, public_key: &PublicKey, uuid: &str) -> Result<Did, VdrError>;
}

impl<T: DidResolver + ?Sized> DidResolver for Arc<T> {
    fn resolve_did(&self, did: &Did) -> Result<DidDocument, VdrError> {
        (**self).resolve_did(did)
    }
}

impl<T: DidRegistrar + ?Sized> DidRegistrar for Arc<T> {
    fn register_did(&self, public_key: &PublicKey, uuid: &str) -> Result<Did, VdrError> {
        (**self).register_did(public_key, uuid)
    }
}

pub struct Registry {
    store: Arc<dyn DidStore>,
    clock: SharedClock,
}

impl Registry {
    pub fn new(store: Arc<dyn DidStore>, clock: SharedClock) -> Self {
        Registry { store, clock }
    }

    pub fn in_memory() -> Self {
        Registry::new(Arc::new(MemoryStore::new()), system_clock())
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    /// Registration from wire-level inputs; validates the key encoding.
    pub fn register_encoded(&self, key: &[u8], algorithm: &str, uuid: &str) -> Result<Did, VdrError> {
        if algorithm != ED25519 {
            return Err(VdrError::InvalidInput(format!("unsupported key algorithm {algorithm:?}")));
        }
        let key = PublicKey::from_bytes(key).map_err(|e| VdrError::InvalidInput(e.to_string()))?;
        self.register_did(&key, uuid)
    }

    fn insert_fresh(&self, public_key: &PublicKey, uuid: &str) -> Result<Did, VdrError> {
        let created_at = self.clock.now();
        // A v4 collision is astronomically unlikely; retry rather than fail.
        for _ in 0..4 {
            let doc = DidDocument {
                did: Did::new_random(),
                public_key: *public_key,
                algorithm: public_key.algorithm().to_string(),
                created_at,
                uuid: uuid.to_string(),
            };
            let did = doc.did;
            match self.store.insert(doc) {
                Ok(()) => return Ok(did),
                Err(StoreError::Conflict(_)) => continue,
                Err(e) => return Err(VdrError::Store(e.to_string())),
            }
        }
        Err(VdrError::Store("could not mint a unique identifier".into()))
    }
}

impl DidRegistrar for Registry {
    fn register_did(&self, public_key: &PublicKey, uuid: &str) -> Result<Did, VdrError> {
        if uuid.is_empty() {
            return Err(VdrError::InvalidInput("uuid must be nonempty".into()));
        }
        self.insert_fresh(public_key, uuid)
    }
}

impl DidResolver for Registry {
    fn resolve_did(&self, did: &Did) -> Result<DidDocument, VdrError> {
        match self.store.get(did) {
            Ok(Some(doc)) => Ok((*doc).clone()),
            Ok(None) => Err(VdrError::NotFound(did.to_string())),
            Err(e) => Err(VdrError::Store(e.to_string())),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub public_key: String,
    pub algorithm: String,
    pub uuid: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub did: Did,
}

fn error_response(e: &VdrError) -> WireResponse {
    match e {
        VdrError::NotFound(m) => WireResponse::not_found(m),
        VdrError::InvalidInput(m) => WireResponse::bad_request(m),
        VdrError::Store(m) | VdrError::Transport(m) => WireResponse::error(500, "store", m),
    }
}

/// Routes:
/// `POST /did/register {public_key, algorithm, uuid} -> {did}` and
/// `GET /did/resolve/{did} -> DidDocument`.
impl Handler for Registry {
    fn handle(&self, request: &WireRequest) -> WireResponse {
        match (request.method, request.segments().as_slice()) {
            (Method::Post, ["did", "register"]) => {
                let body: RegisterRequest = match from_json(&request.body) {
                    Ok(b) => b,
                    Err(e) => return WireResponse::bad_request(&e.to_string()),
                };
                let key = match b64_decode(&body.public_key) {
                    Ok(k) => k,
                    Err(e) => return WireResponse::bad_request(&format!("public_key: {e}")),
                };
                match self.register_encoded(&key, &body.algorithm, &body.uuid) {
                    Ok(did) => WireResponse::ok(&RegisterResponse { did }),
                    Err(e) => error_response(&e),
                }
            }
            (Method::Get, ["did", "resolve", did]) => {
                let did: Did = match did.parse() {
                    Ok(d) => d,
                    Err(e) => return error_response(&VdrError::from(e)),
                };
                match self.resolve_did(&did) {
                    Ok(doc) => WireResponse::ok(&doc),
                    Err(e) => error_response(&e),
                }
            }
            _ => WireResponse::not_found("no such route"),
        }
    }
}
