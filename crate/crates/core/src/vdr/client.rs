use crate::codec::{b64_encode, canonical_json, from_json};
use crate::crypto::PublicKey;
use crate::did::{Did, DidDocument};
use crate::wire::{Transport, WireRequest, WireResponse};

use super::{DidRegistrar, DidResolver, RegisterRequest, RegisterResponse, VdrError};

/// Registry client speaking the wire API over any transport.
#[derive(Clone)]
pub struct VdrClient<T> {
    transport: T,
}

impl<T: Transport> VdrClient<T> {
    pub fn new(transport: T) -> Self {
        VdrClient { transport }
    }

    fn call(&self, request: WireRequest) -> Result<WireResponse, VdrError> {
        let response = self
            .transport
            .call(request)
            .map_err(|e| VdrError::Transport(e.0))?;
        if response.is_success() {
            return Ok(response);
        }
        let message = response
            .error_body()
            .map(|b| b.message)
            .unwrap_or_else(|| format!("status {}", response.status));
        Err(match response.status {
            404 => VdrError::NotFound(message),
            400 => VdrError::InvalidInput(message),
            _ => VdrError::Store(message),
        })
    }
}

impl<T: Transport> DidResolver for VdrClient<T> {
    fn resolve_did(&self, did: &Did) -> Result<DidDocument, VdrError> {
        let response = self.call(WireRequest::get(format!("/did/resolve/{did}")))?;
        let doc: DidDocument =
            from_json(&response.body).map_err(|e| VdrError::Transport(e.to_string()))?;
        if doc.did != *did {
            return Err(VdrError::Transport(format!("registry answered for {} instead of {did}", doc.did)));
        }
        Ok(doc)
    }
}

impl<T: Transport> DidRegistrar for VdrClient<T> {
    fn register_did(&self, public_key: &PublicKey, uuid: &str) -> Result<Did, VdrError> {
        let body = RegisterRequest {
            public_key: b64_encode(&public_key.to_bytes()),
            algorithm: public_key.algorithm().to_string(),
            uuid: uuid.to_string(),
        };
        let body = canonical_json(&body).map_err(|e| VdrError::InvalidInput(e.to_string()))?;
        let response = self.call(WireRequest::post("/did/register", body))?;
        let reply: RegisterResponse =
            from_json(&response.body).map_err(|e| VdrError::Transport(e.to_string()))?;
        Ok(reply.did)
    }
}
