use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{error_response, AccessError, AccessErrorBody};
use crate::codec::{canonical_json, from_json};
use crate::presentation::VerifiedAttributes;
use crate::vdr::DidResolver;
use crate::vppl::{evaluate_policy, verify_policy_signature, Decision, Policy, SignatureStatus};
use crate::wire::{Handler, Method, Transport, WireRequest, WireResponse};

/// Decision point as seen by the resource owner: in-process or remote.
pub trait PolicyDecisionPoint: Send + Sync {
    fn decide(&self, policy: &Policy, attributes: &VerifiedAttributes) -> Result<Decision, AccessError>;
}

impl<P: PolicyDecisionPoint + ?Sized> PolicyDecisionPoint for Arc<P> {
    fn decide(&self, policy: &Policy, attributes: &VerifiedAttributes) -> Result<Decision, AccessError> {
        (**self).decide(policy, attributes)
    }
}

/// PDP plus PEP: checks the policy signature when present, evaluates, and
/// returns the decision unchanged. Mapping to grant or deny is the owner's.
pub struct AuthorizationServer {
    resolver: Arc<dyn DidResolver>,
    calls: AtomicU64,
}

impl AuthorizationServer {
    pub fn new(resolver: Arc<dyn DidResolver>) -> Self {
        AuthorizationServer { resolver, calls: AtomicU64::new(0) }
    }

    /// Number of decisions requested so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl PolicyDecisionPoint for AuthorizationServer {
    fn decide(&self, policy: &Policy, attributes: &VerifiedAttributes) -> Result<Decision, AccessError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match verify_policy_signature(policy, self.resolver.as_ref()) {
            Ok(SignatureStatus::Valid | SignatureStatus::Unsigned) => {}
            Ok(SignatureStatus::Invalid) => {
                return Err(AccessError::PolicyIntegrity("signature does not match policy content".into()))
            }
            Err(e) => return Err(AccessError::Registry(e)),
        }
        Ok(evaluate_policy(policy, attributes))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorizeRequest {
    pub policy: Policy,
    pub attributes: VerifiedAttributes,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorizeResponse {
    pub decision: Decision,
}

/// `POST /authorize {policy, attributes} -> {decision}`
impl Handler for AuthorizationServer {
    fn handle(&self, request: &WireRequest) -> WireResponse {
        match (request.method, request.segments().as_slice()) {
            (Method::Post, ["authorize"]) => {
                let body: AuthorizeRequest = match from_json(&request.body) {
                    Ok(b) => b,
                    Err(e) => return error_response(&AccessError::InvalidInput(e.to_string()), vec![]),
                };
                match self.decide(&body.policy, &body.attributes) {
                    Ok(decision) => WireResponse::ok(&AuthorizeResponse { decision }),
                    Err(e) => error_response(&e, vec![]),
                }
            }
            _ => WireResponse::not_found("no such route"),
        }
    }
}

/// Remote decision point over any transport.
pub struct AuthzClient<T> {
    transport: T,
}

impl<T: Transport> AuthzClient<T> {
    pub fn new(transport: T) -> Self {
        AuthzClient { transport }
    }
}

impl<T: Transport> PolicyDecisionPoint for AuthzClient<T> {
    fn decide(&self, policy: &Policy, attributes: &VerifiedAttributes) -> Result<Decision, AccessError> {
        let body = canonical_json(&AuthorizeRequest { policy: policy.clone(), attributes: attributes.clone() })
            .map_err(|e| AccessError::InvalidInput(e.to_string()))?;
        let response = self
            .transport
            .call(WireRequest::post("/authorize", body))
            .map_err(|e| AccessError::Transport(e.0))?;
        if !response.is_success() {
            return Err(decode_error(&response));
        }
        let reply: AuthorizeResponse = from_json(&response.body).map_err(|e| AccessError::Transport(e.to_string()))?;
        Ok(reply.decision)
    }
}

pub(crate) fn decode_error(response: &WireResponse) -> AccessError {
    match from_json::<AccessErrorBody>(&response.body) {
        Ok(body) => body.into_error(),
        Err(_) => AccessError::Transport(format!("status {}", response.status)),
    }
}
