//! Issuer as a wire service. Attribute values come from an enrollment table
//! the issuer controls; holders only prove key possession.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::codec::{canonical_json, from_json};
use crate::credential::{AttributeClaim, Challenge, ChallengeResponse, CredentialError, IssuedCredential, Issuer};
use crate::did::Did;
use crate::wire::{Handler, Method, Transport, WireRequest, WireResponse};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChallengeRequest {
    pub holder_did: Did,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueRequest {
    pub response: ChallengeResponse,
}

pub struct IssuerService {
    issuer: Arc<Issuer>,
    roster: RwLock<HashMap<Did, Vec<AttributeClaim>>>,
}

impl IssuerService {
    pub fn new(issuer: Arc<Issuer>) -> Self {
        IssuerService { issuer, roster: RwLock::new(HashMap::new()) }
    }

    pub fn issuer(&self) -> &Arc<Issuer> {
        &self.issuer
    }

    /// Records the attributes this issuer attests for `holder`.
    pub fn enroll(&self, holder: Did, claims: Vec<AttributeClaim>) {
        self.roster.write().insert(holder, claims);
    }
}

/// Routes: `POST /vc/challenge {holder_did} -> Challenge` and
/// `POST /vc/issue {response} -> IssuedCredential`.
impl Handler for IssuerService {
    fn handle(&self, request: &WireRequest) -> WireResponse {
        match (request.method, request.segments().as_slice()) {
            (Method::Post, ["vc", "challenge"]) => {
                let body: ChallengeRequest = match from_json(&request.body) {
                    Ok(b) => b,
                    Err(e) => return WireResponse::bad_request(&e.to_string()),
                };
                if !self.roster.read().contains_key(&body.holder_did) {
                    return WireResponse::not_found("holder is not enrolled with this issuer");
                }
                match self.issuer.create_challenge(body.holder_did) {
                    Ok(c) => WireResponse::ok(&c),
                    Err(e) => WireResponse::error(500, "internal", &e.to_string()),
                }
            }
            (Method::Post, ["vc", "issue"]) => {
                let body: IssueRequest = match from_json(&request.body) {
                    Ok(b) => b,
                    Err(e) => return WireResponse::bad_request(&e.to_string()),
                };
                let claims = match self.roster.read().get(&body.response.challenge.holder_did) {
                    Some(c) => c.clone(),
                    None => return WireResponse::not_found("holder is not enrolled with this issuer"),
                };
                match self.issuer.issue(&body.response, claims) {
                    Ok(issued) => WireResponse::ok(&issued),
                    Err(CredentialError::NotAuthenticated) => {
                        WireResponse::error(401, "authentication", "challenge response rejected")
                    }
                    Err(CredentialError::Registry(e)) => WireResponse::error(502, "registry", &e.to_string()),
                    Err(e) => WireResponse::bad_request(&e.to_string()),
                }
            }
            _ => WireResponse::not_found("no such route"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("issuer returned {status}: {message}")]
pub struct IssuerClientError {
    pub status: u16,
    pub message: String,
}

pub struct IssuerClient<T> {
    transport: T,
}

impl<T: Transport> IssuerClient<T> {
    pub fn new(transport: T) -> Self {
        IssuerClient { transport }
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, IssuerClientError> {
        let fail = |status, message: String| IssuerClientError { status, message };
        let body = canonical_json(body).map_err(|e| fail(0, e.to_string()))?;
        let response = self.transport.call(WireRequest::post(path, body)).map_err(|e| fail(0, e.0))?;
        if !response.is_success() {
            let message = response.error_body().map(|b| b.message).unwrap_or_default();
            return Err(fail(response.status, message));
        }
        from_json(&response.body).map_err(|e| fail(response.status, e.to_string()))
    }

    pub fn challenge(&self, holder_did: Did) -> Result<Challenge, IssuerClientError> {
        self.post("/vc/challenge", &ChallengeRequest { holder_did })
    }

    pub fn issue(&self, response: ChallengeResponse) -> Result<IssuedCredential, IssuerClientError> {
        self.post("/vc/issue", &IssueRequest { response })
    }
}
