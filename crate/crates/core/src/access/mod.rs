//! Resource Server (Directory, ACPM, content), Authorization Server (PDP and
//! PEP) and the owner-side verifier, wired into the four-phase flow: upload,
//! authenticate, authorize, access.

mod authz;
mod client;
mod issuer;
mod resource;
mod store;

pub use authz::{AuthorizationServer, AuthorizeRequest, AuthorizeResponse, AuthzClient, PolicyDecisionPoint};
pub use client::ResourceClient;
pub use issuer::{ChallengeRequest, IssueRequest, IssuerClient, IssuerClientError, IssuerService};
pub use resource::{FailClosed, OwnerHook, ResourceServer, ResourceServerConfig};
pub use store::{Acpm, ContentStore, Directory, FileContentStore, MemoryContentStore};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::Timestamp;
use crate::codec::{base64_bytes, hex_array};
use crate::did::Did;
use crate::presentation::SignedPresentation;
use crate::vdr::VdrError;
use crate::vppl::{Decision, Outcome, Policy};
use crate::wire::WireResponse;

pub const GRANT_TOKEN_LEN: usize = 32;
pub const DEFAULT_GRANT_TTL: u64 = 300;
pub const DEFAULT_PRESENTATION_MAX_AGE: u64 = 300;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRecord {
    pub resource_id: Uuid,
    pub owner_did: Did,
    /// Where the content lives, e.g. `file:///var/lib/polaris/<id>.bin`.
    pub address: String,
    pub description: String,
    pub created_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessGrant {
    pub grant_id: Uuid,
    pub resource_id: Uuid,
    pub requester_did: Did,
    pub decision_trace: Decision,
    pub expires_at: Timestamp,
    #[serde(with = "hex_array")]
    pub token: [u8; GRANT_TOKEN_LEN],
}

impl AccessGrant {
    pub fn token_hex(&self) -> String {
        hex::encode(self.token)
    }
}

/// Completed steps of the access pipeline, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Authenticate,
    Freshness,
    ConsumeNonce,
    FetchPolicy,
    Pdp,
    OwnerDecision,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denial {
    pub outcome: Outcome,
    pub decision: Decision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrantError {
    Unknown,
    Expired,
    WrongResource,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AccessError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("policy rejected: {0}")]
    PolicyRejected(String),
    #[error("authentication failed: {message}")]
    Authentication { message: String, step: Option<u8> },
    #[error("presentation nonce already used")]
    Replay,
    #[error("policy integrity check failed: {0}")]
    PolicyIntegrity(String),
    #[error("access denied ({:?})", .0.outcome)]
    Denied(Box<Denial>),
    #[error("grant rejected: {0:?}")]
    Grant(GrantError),
    #[error(transparent)]
    Registry(VdrError),
    #[error("transport failure: {0}")]
    Transport(String),
}

impl AccessError {
    pub fn code(&self) -> &'static str {
        match self {
            AccessError::NotFound(_) => "not_found",
            AccessError::InvalidInput(_) => "invalid_input",
            AccessError::PolicyRejected(_) => "policy_rejected",
            AccessError::Authentication { .. } => "authentication",
            AccessError::Replay => "replay",
            AccessError::PolicyIntegrity(_) => "policy_integrity",
            AccessError::Denied(_) => "denied",
            AccessError::Grant(GrantError::Unknown) => "grant_unknown",
            AccessError::Grant(GrantError::Expired) => "grant_expired",
            AccessError::Grant(GrantError::WrongResource) => "grant_scope",
            AccessError::Registry(_) => "registry",
            AccessError::Transport(_) => "transport",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            AccessError::NotFound(_) => 404,
            AccessError::InvalidInput(_) => 400,
            AccessError::PolicyRejected(_) => 422,
            AccessError::Authentication { .. } => 401,
            AccessError::Replay => 409,
            AccessError::PolicyIntegrity(_) => 412,
            AccessError::Denied(_) | AccessError::Grant(_) => 403,
            AccessError::Registry(_) | AccessError::Transport(_) => 502,
        }
    }
}

/// Error body of the access services. Carries the pipeline stages reached
/// and, for a clean deny, the full decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denial: Option<Denial>,
    #[serde(default)]
    pub stages: Vec<Stage>,
}

impl AccessErrorBody {
    pub fn from_error(e: &AccessError, stages: Vec<Stage>) -> Self {
        AccessErrorBody {
            error: e.code().to_string(),
            message: e.to_string(),
            step: match e {
                AccessError::Authentication { step, .. } => *step,
                _ => None,
            },
            denial: match e {
                AccessError::Denied(d) => Some((**d).clone()),
                _ => None,
            },
            stages,
        }
    }

    pub fn into_error(self) -> AccessError {
        match self.error.as_str() {
            "not_found" => AccessError::NotFound(self.message),
            "invalid_input" => AccessError::InvalidInput(self.message),
            "policy_rejected" => AccessError::PolicyRejected(self.message),
            "authentication" => AccessError::Authentication { message: self.message, step: self.step },
            "replay" => AccessError::Replay,
            "policy_integrity" => AccessError::PolicyIntegrity(self.message),
            "denied" => match self.denial {
                Some(d) => AccessError::Denied(Box::new(d)),
                None => AccessError::Transport("denial without decision".into()),
            },
            "grant_unknown" => AccessError::Grant(GrantError::Unknown),
            "grant_expired" => AccessError::Grant(GrantError::Expired),
            "grant_scope" => AccessError::Grant(GrantError::WrongResource),
            "registry" => AccessError::Registry(VdrError::Transport(self.message)),
            _ => AccessError::Transport(self.message),
        }
    }
}

pub(crate) fn error_response(e: &AccessError, stages: Vec<Stage>) -> WireResponse {
    match crate::codec::canonical_json(&AccessErrorBody::from_error(e, stages)) {
        Ok(body) => WireResponse::raw(e.status(), body),
        Err(err) => WireResponse::error(500, "internal", &err.to_string()),
    }
}

/// Outcome of one access request together with the stages it passed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessAttempt {
    pub result: Result<AccessGrant, AccessError>,
    pub stages: Vec<Stage>,
}

impl AccessAttempt {
    pub fn reached(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadRequest {
    #[serde(with = "base64_bytes")]
    pub content: Vec<u8>,
    pub description: String,
    pub policy: Policy,
    pub owner_did: Did,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessRequest {
    pub signed_presentation: SignedPresentation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccessResponse {
    pub grant: AccessGrant,
    pub stages: Vec<Stage>,
}

#[cfg(test)]
mod tests;
