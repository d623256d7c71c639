use uuid::Uuid;

use super::authz::decode_error;
use super::{AccessAttempt, AccessErrorBody, AccessError, AccessRequest, AccessResponse, ResourceRecord, UploadRequest};
use crate::codec::{canonical_json, from_json};
use crate::did::Did;
use crate::presentation::SignedPresentation;
use crate::vppl::{parse_policy, Policy};
use crate::wire::{Transport, WireRequest, WireResponse};

/// Requester and owner side of the Resource Server wire API.
pub struct ResourceClient<T> {
    transport: T,
}

impl<T: Transport> ResourceClient<T> {
    pub fn new(transport: T) -> Self {
        ResourceClient { transport }
    }

    fn call(&self, request: WireRequest) -> Result<WireResponse, AccessError> {
        let response = self.transport.call(request).map_err(|e| AccessError::Transport(e.0))?;
        if response.is_success() {
            Ok(response)
        } else {
            Err(decode_error(&response))
        }
    }

    pub fn upload(
        &self,
        owner_did: Did,
        content: &[u8],
        description: &str,
        policy: &Policy,
    ) -> Result<ResourceRecord, AccessError> {
        let body = UploadRequest {
            content: content.to_vec(),
            description: description.to_string(),
            policy: policy.clone(),
            owner_did,
        };
        let body = canonical_json(&body).map_err(|e| AccessError::InvalidInput(e.to_string()))?;
        let response = self.call(WireRequest::post("/resource", body))?;
        from_json(&response.body).map_err(|e| AccessError::Transport(e.to_string()))
    }

    /// The stored policy and the exact bytes it was served as.
    pub fn get_policy(&self, resource_id: &Uuid) -> Result<(Policy, Vec<u8>), AccessError> {
        let response = self.call(WireRequest::get(format!("/resource/{resource_id}/policy")))?;
        let policy = parse_policy(&response.body).map_err(|e| AccessError::PolicyIntegrity(e.to_string()))?;
        Ok((policy, response.body))
    }

    pub fn request_access(&self, resource_id: &Uuid, presentation: &SignedPresentation) -> AccessAttempt {
        let body = match canonical_json(&AccessRequest { signed_presentation: presentation.clone() }) {
            Ok(b) => b,
            Err(e) => return AccessAttempt { result: Err(AccessError::InvalidInput(e.to_string())), stages: vec![] },
        };
        let response = match self.transport.call(WireRequest::post(format!("/resource/{resource_id}/access"), body)) {
            Ok(r) => r,
            Err(e) => return AccessAttempt { result: Err(AccessError::Transport(e.0)), stages: vec![] },
        };
        if response.is_success() {
            match from_json::<AccessResponse>(&response.body) {
                Ok(r) => AccessAttempt { result: Ok(r.grant), stages: r.stages },
                Err(e) => AccessAttempt { result: Err(AccessError::Transport(e.to_string())), stages: vec![] },
            }
        } else {
            match from_json::<AccessErrorBody>(&response.body) {
                Ok(body) => {
                    let stages = body.stages.clone();
                    AccessAttempt { result: Err(body.into_error()), stages }
                }
                Err(_) => AccessAttempt {
                    result: Err(AccessError::Transport(format!("status {}", response.status))),
                    stages: vec![],
                },
            }
        }
    }

    pub fn fetch(&self, resource_id: &Uuid, token_hex: &str) -> Result<Vec<u8>, AccessError> {
        let response = self.call(WireRequest::get(format!("/resource/{resource_id}/content?token={token_hex}")))?;
        Ok(response.body)
    }
}
