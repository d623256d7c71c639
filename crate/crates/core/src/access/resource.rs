use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use uuid::Uuid;

use super::{
    error_response, AccessAttempt, AccessError, AccessGrant, AccessRequest, AccessResponse, Acpm, ContentStore,
    Denial, Directory, GrantError, PolicyDecisionPoint, ResourceRecord, Stage, UploadRequest,
    DEFAULT_GRANT_TTL, DEFAULT_PRESENTATION_MAX_AGE,
};
use crate::clock::{SharedClock, Timestamp};
use crate::codec::from_json;
use crate::crypto::random_bytes;
use crate::did::Did;
use crate::presentation::{verify_presentation, SignedPresentation, PRESENTATION_NONCE_LEN};
use crate::vdr::{DidResolver, VdrError};
use crate::vppl::{parse_policy, serialize_policy, verify_policy_signature, Decision, Outcome, Policy, SignatureStatus};
use crate::wire::{Handler, Method, WireRequest, WireResponse};

/// Tolerated clock skew for presentation timestamps.
const SKEW_SECS: u64 = 30;

#[derive(Clone, Debug)]
pub struct ResourceServerConfig {
    /// Reject uploads whose policy is not signed by the owner.
    pub signing_required: bool,
    pub grant_ttl: u64,
    pub presentation_max_age: u64,
}

impl Default for ResourceServerConfig {
    fn default() -> Self {
        ResourceServerConfig {
            signing_required: true,
            grant_ttl: DEFAULT_GRANT_TTL,
            presentation_max_age: DEFAULT_PRESENTATION_MAX_AGE,
        }
    }
}

/// The owner's final say over a PEP decision.
pub trait OwnerHook: Send + Sync {
    fn finalize(&self, record: &ResourceRecord, requester: &Did, decision: &Decision) -> bool;
}

/// Grants on Permit only; Deny and NotApplicable both deny.
pub struct FailClosed;

impl OwnerHook for FailClosed {
    fn finalize(&self, _: &ResourceRecord, _: &Did, decision: &Decision) -> bool {
        decision.outcome == Outcome::Permit
    }
}

/// Resource Server hosting the Directory, the ACPM, content storage and the
/// owner's verifier role.
pub struct ResourceServer {
    directory: Directory,
    acpm: Acpm,
    content: Arc<dyn ContentStore>,
    pdp: Arc<dyn PolicyDecisionPoint>,
    resolver: Arc<dyn DidResolver>,
    clock: SharedClock,
    config: ResourceServerConfig,
    hook: Arc<dyn OwnerHook>,
    seen_nonces: Mutex<HashMap<[u8; PRESENTATION_NONCE_LEN], Timestamp>>,
    grants: RwLock<HashMap<[u8; 32], AccessGrant>>,
}

impl ResourceServer {
    pub fn new(
        content: Arc<dyn ContentStore>,
        pdp: Arc<dyn PolicyDecisionPoint>,
        resolver: Arc<dyn DidResolver>,
        clock: SharedClock,
        config: ResourceServerConfig,
    ) -> Self {
        ResourceServer {
            directory: Directory::new(),
            acpm: Acpm::new(),
            content,
            pdp,
            resolver,
            clock,
            config,
            hook: Arc::new(FailClosed),
            seen_nonces: Mutex::new(HashMap::new()),
            grants: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_owner_hook(mut self, hook: Arc<dyn OwnerHook>) -> Self {
        self.hook = hook;
        self
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn upload_resource(
        &self,
        owner_did: Did,
        content: &[u8],
        description: &str,
        policy: &Policy,
    ) -> Result<ResourceRecord, AccessError> {
        match self.resolver.resolve_did(&owner_did) {
            Ok(_) => {}
            Err(VdrError::NotFound(_)) => {
                return Err(AccessError::InvalidInput(format!("owner {owner_did} is not registered")))
            }
            Err(e) => return Err(AccessError::Registry(e)),
        }
        crate::vppl::validate(policy).map_err(|e| AccessError::PolicyRejected(e.to_string()))?;
        if let Some(sig) = &policy.signature {
            if sig.signer_did != owner_did {
                return Err(AccessError::PolicyRejected("policy is signed by someone other than the owner".into()));
            }
        }
        match verify_policy_signature(policy, self.resolver.as_ref()) {
            Ok(SignatureStatus::Valid) => {}
            Ok(SignatureStatus::Unsigned) if !self.config.signing_required => {}
            Ok(SignatureStatus::Unsigned) => return Err(AccessError::PolicyRejected("policy must be signed".into())),
            Ok(SignatureStatus::Invalid) => {
                return Err(AccessError::PolicyRejected("policy signature does not verify".into()))
            }
            Err(e) => return Err(AccessError::Registry(e)),
        }
        let resource_id = Uuid::new_v4();
        let address = self.content.put(resource_id, content)?;
        let record = ResourceRecord {
            resource_id,
            owner_did,
            address,
            description: description.to_string(),
            created_at: self.clock.now(),
        };
        self.acpm.put(resource_id, serialize_policy(policy));
        self.directory.insert(record.clone())?;
        Ok(record)
    }

    /// Canonical policy bytes exactly as stored.
    pub fn get_policy_bytes(&self, resource_id: &Uuid) -> Result<Vec<u8>, AccessError> {
        self.acpm
            .get(resource_id)
            .ok_or_else(|| AccessError::NotFound(format!("resource {resource_id}")))
    }

    pub fn get_policy(&self, resource_id: &Uuid) -> Result<Policy, AccessError> {
        let bytes = self.get_policy_bytes(resource_id)?;
        parse_policy(&bytes).map_err(|e| AccessError::PolicyIntegrity(e.to_string()))
    }

    /// Authenticate, check freshness, consume the nonce, fetch the policy,
    /// ask the PDP, and let the owner finalize.
    pub fn request_access(&self, msg: &SignedPresentation, resource_id: &Uuid) -> AccessAttempt {
        let mut stages = Vec::new();
        let result = self.pipeline(msg, resource_id, &mut stages);
        AccessAttempt { result, stages }
    }

    fn pipeline(
        &self,
        msg: &SignedPresentation,
        resource_id: &Uuid,
        stages: &mut Vec<Stage>,
    ) -> Result<AccessGrant, AccessError> {
        let record = self
            .directory
            .get(resource_id)
            .ok_or_else(|| AccessError::NotFound(format!("resource {resource_id}")))?;
        let now = self.clock.now();

        let attributes = verify_presentation(msg, self.resolver.as_ref(), now).map_err(|e| match e {
            crate::presentation::PresentationError::Registry(VdrError::Transport(t)) => AccessError::Transport(t),
            e => AccessError::Authentication { step: e.step(), message: e.to_string() },
        })?;
        stages.push(Stage::Authenticate);

        let vp = &msg.vp;
        if vp.audience != record.owner_did {
            return Err(AccessError::Authentication {
                step: None,
                message: format!("presentation is addressed to {}, not the resource owner", vp.audience),
            });
        }
        let oldest = Timestamp(now.0 - self.config.presentation_max_age as i64);
        if vp.created_at < oldest || vp.created_at > now.plus_secs(SKEW_SECS) {
            return Err(AccessError::Authentication { step: None, message: "presentation is not fresh".into() });
        }
        stages.push(Stage::Freshness);

        {
            let mut seen = self.seen_nonces.lock();
            if seen.contains_key(&vp.nonce) {
                return Err(AccessError::Replay);
            }
            if seen.len() >= 4096 {
                seen.retain(|_, at| *at >= oldest);
            }
            seen.insert(vp.nonce, vp.created_at);
        }
        stages.push(Stage::ConsumeNonce);

        let policy = self.get_policy(resource_id)?;
        stages.push(Stage::FetchPolicy);

        let decision = self.pdp.decide(&policy, &attributes)?;
        stages.push(Stage::Pdp);

        let permitted = self.hook.finalize(&record, &vp.holder_did, &decision);
        stages.push(Stage::OwnerDecision);
        if !permitted {
            let outcome = match decision.outcome {
                Outcome::Permit => Outcome::Deny,
                o => o,
            };
            return Err(AccessError::Denied(Box::new(Denial { outcome, decision })));
        }

        let grant = AccessGrant {
            grant_id: Uuid::new_v4(),
            resource_id: *resource_id,
            requester_did: vp.holder_did,
            decision_trace: decision,
            expires_at: now.plus_secs(self.config.grant_ttl),
            token: random_bytes().map_err(|e| AccessError::Transport(e.to_string()))?,
        };
        self.grants.write().insert(grant.token, grant.clone());
        Ok(grant)
    }

    /// Grants are bearer tokens scoped to one resource and reusable until
    /// they expire.
    pub fn fetch_resource(&self, token: &[u8], resource_id: &Uuid) -> Result<Vec<u8>, AccessError> {
        let token: [u8; 32] = token.try_into().map_err(|_| AccessError::Grant(GrantError::Unknown))?;
        let grant = self
            .grants
            .read()
            .get(&token)
            .cloned()
            .ok_or(AccessError::Grant(GrantError::Unknown))?;
        if self.clock.now() >= grant.expires_at {
            self.grants.write().remove(&token);
            return Err(AccessError::Grant(GrantError::Expired));
        }
        if grant.resource_id != *resource_id {
            return Err(AccessError::Grant(GrantError::WrongResource));
        }
        let record = self
            .directory
            .get(resource_id)
            .ok_or_else(|| AccessError::NotFound(format!("resource {resource_id}")))?;
        self.content.get(&record.address)
    }
}

fn parse_id(text: &str) -> Result<Uuid, AccessError> {
    Uuid::parse_str(text).map_err(|e| AccessError::InvalidInput(format!("resource id: {e}")))
}

/// Routes:
/// `POST /resource`, `GET /resource/{id}/policy`,
/// `POST /resource/{id}/access`, `GET /resource/{id}/content?token=..`.
impl Handler for ResourceServer {
    fn handle(&self, request: &WireRequest) -> WireResponse {
        let fail = |e: AccessError| error_response(&e, vec![]);
        match (request.method, request.segments().as_slice()) {
            (Method::Post, ["resource"]) => {
                let body: UploadRequest = match from_json(&request.body) {
                    Ok(b) => b,
                    Err(e) => return fail(AccessError::InvalidInput(e.to_string())),
                };
                match self.upload_resource(body.owner_did, &body.content, &body.description, &body.policy) {
                    Ok(record) => WireResponse::ok(&record),
                    Err(e) => fail(e),
                }
            }
            (Method::Get, ["resource", id, "policy"]) => {
                match parse_id(id).and_then(|id| self.get_policy_bytes(&id)) {
                    Ok(bytes) => WireResponse::raw(200, bytes),
                    Err(e) => fail(e),
                }
            }
            (Method::Post, ["resource", id, "access"]) => {
                let id = match parse_id(id) {
                    Ok(id) => id,
                    Err(e) => return fail(e),
                };
                let body: AccessRequest = match from_json(&request.body) {
                    Ok(b) => b,
                    Err(e) => return fail(AccessError::InvalidInput(e.to_string())),
                };
                let attempt = self.request_access(&body.signed_presentation, &id);
                match attempt.result {
                    Ok(grant) => WireResponse::ok(&AccessResponse { grant, stages: attempt.stages }),
                    Err(e) => error_response(&e, attempt.stages),
                }
            }
            (Method::Get, ["resource", id, "content"]) => {
                let id = match parse_id(id) {
                    Ok(id) => id,
                    Err(e) => return fail(e),
                };
                let token = match request.query_param("token").map(hex::decode) {
                    Some(Ok(t)) => t,
                    _ => return fail(AccessError::Grant(GrantError::Unknown)),
                };
                match self.fetch_resource(&token, &id) {
                    Ok(bytes) => WireResponse::raw(200, bytes),
                    Err(e) => fail(e),
                }
            }
            _ => WireResponse::not_found("no such route"),
        }
    }
}
